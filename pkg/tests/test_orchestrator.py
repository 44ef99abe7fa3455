import json
import warnings

import numpy as np
import pytest

import fedpft as fp
from fedpft._seeding import derive_seed

from conftest import synthetic_problem


def quiet_run(clients, test, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fp.run(clients, test, cfg)


def iid_clients(train, k=5):
    assignment = np.arange(train.num_samples) % k
    return fp.partition(train, fp.PartitionSpec("explicit", k, assignment=assignment))


class TestEvaluate:
    def test_perfect_head(self):
        truth = [
            fp.GmmParams(fp.CovarianceFamily.SPHERICAL, [1.0], 20.0 * np.eye(3)[c][None], [0.5])
            for c in range(3)
        ]
        train = fp.synth_generate(fp.SynthSpec(truth, 50, seed=0), "train")
        head, _ = fp.train_head(train.features.astype(float), train.labels, 3,
                                fp.TrainConfig(seed=0))
        assert fp.evaluate(head, train) == 1.0

    def test_uniform_head_near_chance(self):
        _, train, _ = synthetic_problem(1, num_classes=4, dim=3, train_per_class=500)
        head = fp.ClassifierHead(np.zeros((4, 3)), np.zeros(4))
        acc = fp.evaluate(head, train)
        n = train.num_samples
        se = np.sqrt(0.25 * 0.75 / n)
        assert abs(acc - 0.25) <= 3 * se

    def test_complement_of_zero_one_loss(self):
        _, train, _ = synthetic_problem(2, num_classes=3, dim=4, train_per_class=40)
        rng = np.random.default_rng(0)
        head = fp.ClassifierHead(rng.standard_normal((3, 4)), rng.standard_normal(3))
        assert fp.evaluate(head, train) == pytest.approx(1.0 - fp.zero_one_loss(head, train))

    def test_empty_test_rejected(self):
        empty = fp.FeatureDataset(np.zeros((0, 2), np.float32), np.zeros(0, int), 2)
        head = fp.ClassifierHead(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            fp.evaluate(head, empty)


class TestRunConfig:
    def test_dp_mode_forces_k1_full(self):
        dp_cfg = fp.DpConfig(1.0, 0.01)
        with pytest.raises(ValueError):
            fp.RunConfig(mode="centralized_dp", dp=dp_cfg, num_components=2,
                         family=fp.CovarianceFamily.FULL)
        with pytest.raises(ValueError):
            fp.RunConfig(mode="centralized_dp", dp=dp_cfg, num_components=1,
                         family=fp.CovarianceFamily.DIAG)
        with pytest.raises(ValueError):
            fp.RunConfig(mode="centralized_dp", dp=None, num_components=1,
                         family=fp.CovarianceFamily.FULL)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            fp.RunConfig(mode="multiround")

    def test_bounds_only_in_centralized(self):
        with pytest.raises(ValueError):
            fp.RunConfig(mode="oracle_centralized", compute_bounds=True)


class TestCentralized:
    def test_single_client_matches_oracle(self):
        _, train, test = synthetic_problem(3, train_per_class=300)
        cfg = fp.RunConfig(mode="centralized", num_components=2,
                           family=fp.CovarianceFamily.DIAG, seed=5)
        rep = quiet_run([train], test, cfg)
        oracle = quiet_run([train], test, fp.RunConfig(mode="oracle_centralized", seed=5))
        assert rep.global_accuracy >= oracle.global_accuracy - 0.02

    def test_disjoint_split_beats_ensemble(self):
        _, train, test = synthetic_problem(4)
        clients = fp.partition(train, fp.PartitionSpec("disjoint_label", 2))
        base = dict(num_components=10, family=fp.CovarianceFamily.DIAG, seed=7)
        fed = quiet_run(clients, test, fp.RunConfig(mode="centralized", **base))
        ens = quiet_run(clients, test, fp.RunConfig(mode="ensemble_baseline", **base))
        oracle = quiet_run(clients, test, fp.RunConfig(mode="oracle_centralized", seed=7))
        assert fed.global_accuracy >= oracle.global_accuracy - 0.03
        assert fed.global_accuracy > ens.global_accuracy

    def test_comm_report_matches_account(self):
        _, train, test = synthetic_problem(5, num_classes=4, dim=6, train_per_class=60)
        clients = iid_clients(train, 3)
        rep = quiet_run(clients, test, fp.RunConfig(
            mode="centralized", num_components=2, family=fp.CovarianceFamily.SPHERICAL, seed=1))
        recomputed = fp.account(rep.messages)
        assert rep.comm == recomputed
        assert rep.comm.total_bytes == sum(len(fp.encode(m)) for m in rep.messages)

    def test_one_message_per_client_class(self):
        _, train, test = synthetic_problem(6, num_classes=5, dim=4, train_per_class=40)
        clients = iid_clients(train, 4)
        rep = quiet_run(clients, test, fp.RunConfig(
            mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG, seed=2))
        expected = sum(len(np.unique(c.labels)) for c in clients)
        assert rep.comm.total_messages == expected
        seen = {(m.client_id, m.class_id) for m in rep.messages}
        assert len(seen) == len(rep.messages)

    def test_class_coverage(self):
        _, train, test = synthetic_problem(7, num_classes=6, dim=4, train_per_class=50)
        # drop class 3 from every client
        keep = train.labels != 3
        reduced = fp.FeatureDataset(train.features[keep], train.labels[keep], 6)
        rep = quiet_run([reduced], test, fp.RunConfig(
            mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG, seed=3))
        assert "3" not in rep.synthetic_class_counts
        assert set(rep.synthetic_class_counts) == {"0", "1", "2", "4", "5"}

    def test_synthetic_counts_match_client_counts(self):
        _, train, test = synthetic_problem(8, num_classes=3, dim=4, train_per_class=70)
        rep = quiet_run([train], test, fp.RunConfig(
            mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG, seed=4))
        for c in range(3):
            assert rep.synthetic_class_counts[str(c)] == int((train.labels == c).sum())

    def test_synth_multiplier(self):
        _, train, test = synthetic_problem(8, num_classes=3, dim=4, train_per_class=50)
        rep = quiet_run([train], test, fp.RunConfig(
            mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG,
            seed=4, synth_multiplier=2.0))
        for c in range(3):
            assert rep.synthetic_class_counts[str(c)] == 2 * int((train.labels == c).sum())

    def test_codec_is_in_the_loop(self):
        # means far outside the binary16 range must fail at the encode stage
        truth = fp.random_ground_truth(2, 3, 1, fp.CovarianceFamily.DIAG,
                                       seed=0, mean_scale=90_000.0)
        train = fp.synth_generate(fp.SynthSpec(truth, 30, seed=1))
        test = fp.synth_generate(fp.SynthSpec(truth, 10, seed=2))
        with pytest.raises(fp.protocol.EncodeRangeError):
            quiet_run([train], test, fp.RunConfig(
                mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG, seed=0))

    def test_empty_client_skipped_with_warning(self):
        _, train, test = synthetic_problem(9, num_classes=3, dim=4, train_per_class=40)
        empty = fp.FeatureDataset(np.zeros((0, 4), np.float32), np.zeros(0, int), 3)
        cfg = fp.RunConfig(mode="centralized", num_components=1,
                           family=fp.CovarianceFamily.DIAG, seed=5)
        with pytest.warns(UserWarning, match="no samples"):
            rep = fp.run([train, empty], test, cfg)
        assert rep.per_client_accuracy[1] is None
        assert any("client 1" in note for note in rep.notes)

    def test_all_empty_federation_rejected(self):
        empty = fp.FeatureDataset(np.zeros((0, 4), np.float32), np.zeros(0, int), 3)
        test = fp.FeatureDataset(np.zeros((1, 4), np.float32), [0], 3)
        with pytest.raises(ValueError):
            quiet_run([empty], test, fp.RunConfig(
                mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG))

    def test_reports_are_reproducible(self):
        _, train, test = synthetic_problem(10, num_classes=4, dim=5, train_per_class=60)
        clients = iid_clients(train, 3)
        cfg = fp.RunConfig(mode="centralized", num_components=2,
                           family=fp.CovarianceFamily.DIAG, seed=9)
        a = quiet_run(clients, test, cfg).to_json()
        b = quiet_run(clients, test, cfg).to_json()
        assert a == b

    def test_thread_count_invisible_in_report(self):
        _, train, test = synthetic_problem(11, num_classes=4, dim=5, train_per_class=60)
        clients = iid_clients(train, 3)
        kwargs = dict(mode="centralized", num_components=2,
                      family=fp.CovarianceFamily.DIAG, seed=9)
        a = quiet_run(clients, test, fp.RunConfig(threads=1, **kwargs)).to_json()
        b = quiet_run(clients, test, fp.RunConfig(threads=4, **kwargs)).to_json()
        assert a == b

    def test_report_json_schema(self):
        _, train, test = synthetic_problem(12, num_classes=3, dim=4, train_per_class=40)
        rep = quiet_run([train], test, fp.RunConfig(
            mode="centralized", num_components=1, family=fp.CovarianceFamily.DIAG, seed=1))
        doc = json.loads(rep.to_json())
        assert list(doc) == [
            "config", "global_accuracy", "per_client_accuracy", "communication",
            "fit_stats", "synthetic_class_counts", "bounds", "notes",
        ]
        assert 0.0 <= doc["global_accuracy"] <= 1.0
        assert doc["communication"]["total_bytes"] > 0


class TestCentralizedDp:
    def test_end_to_end(self):
        _, train, test = synthetic_problem(13, num_classes=3, dim=4,
                                           train_per_class=400, mean_scale=3.0)
        cfg = fp.RunConfig(mode="centralized_dp", num_components=1,
                           family=fp.CovarianceFamily.FULL,
                           dp=fp.DpConfig(epsilon=50.0, delta=0.01), seed=3)
        rep = quiet_run([train], test, cfg)
        assert 0.0 <= rep.global_accuracy <= 1.0
        assert all(s["kind"] == "dp" for s in rep.fit_stats)
        assert rep.config["dp"]["epsilon"] == 50.0

    def test_normalization_forced_on_dp_path(self):
        _, train, test = synthetic_problem(14, num_classes=3, dim=4, train_per_class=100)
        # raw features lie far outside the unit ball, so the private path
        # only works because it normalizes internally
        assert np.linalg.norm(train.features, axis=1).max() > 1.0
        cfg = fp.RunConfig(mode="centralized_dp", num_components=1,
                           family=fp.CovarianceFamily.FULL,
                           dp=fp.DpConfig(epsilon=10.0, delta=0.01), seed=4)
        rep = quiet_run([train], test, cfg)
        assert rep.comm.total_messages == 3

    def test_tiny_class_skipped(self):
        rng = np.random.default_rng(0)
        feats = rng.standard_normal((41, 3)).astype(np.float32)
        labels = np.r_[np.zeros(40, int), [1]]
        ds = fp.FeatureDataset(feats, labels, 2)
        test = fp.FeatureDataset(feats, labels, 2)
        cfg = fp.RunConfig(mode="centralized_dp", num_components=1,
                           family=fp.CovarianceFamily.FULL,
                           dp=fp.DpConfig(epsilon=5.0, delta=0.01), seed=5)
        with pytest.warns(UserWarning, match="at least 2"):
            rep = fp.run([ds], test, cfg)
        assert rep.comm.total_messages == 1

    def test_per_class_delta(self):
        _, train, test = synthetic_problem(15, num_classes=2, dim=3, train_per_class=50)
        cfg = fp.RunConfig(mode="centralized_dp", num_components=1,
                           family=fp.CovarianceFamily.FULL,
                           dp=fp.DpConfig(epsilon=5.0, delta=0.5),
                           dp_delta_per_class=True, seed=6)
        rep = quiet_run([train], test, cfg)
        for stat in rep.fit_stats:
            assert stat["sigma"] == fp.noise_sigma(stat["n"], 5.0, 1.0 / stat["n"])


class TestBaselines:
    def test_ensemble_single_client_equals_local_head(self):
        _, train, test = synthetic_problem(16, num_classes=3, dim=4, train_per_class=80)
        rep = quiet_run([train], test, fp.RunConfig(mode="ensemble_baseline", seed=2))
        assert rep.global_accuracy == pytest.approx(rep.per_client_accuracy[0])

    def test_average_weights_by_samples(self):
        _, train, test = synthetic_problem(17, num_classes=4, dim=4, train_per_class=60)
        clients = iid_clients(train, 2)
        uniform = quiet_run(clients, test, fp.RunConfig(mode="average_baseline", seed=3))
        weighted = quiet_run(clients, test, fp.RunConfig(
            mode="average_baseline", seed=3, average_by_samples=True))
        assert 0.0 <= uniform.global_accuracy <= 1.0
        assert 0.0 <= weighted.global_accuracy <= 1.0


class TestDecentralizedChain:
    def test_needs_two_clients(self):
        _, train, test = synthetic_problem(18, num_classes=3, dim=4, train_per_class=30)
        with pytest.raises(ValueError):
            quiet_run([train], test, fp.RunConfig(mode="decentralized_chain"))

    def test_accumulation_along_chain(self):
        _, train, test = synthetic_problem(19, mean_scale=1.0, train_per_class=50,
                                           components=1)
        clients = iid_clients(train, 5)
        rep = quiet_run(clients, test, fp.RunConfig(
            mode="decentralized_chain", num_components=1,
            family=fp.CovarianceFamily.DIAG, seed=8))
        oracle = quiet_run(clients, test, fp.RunConfig(mode="oracle_centralized", seed=8))
        accs = rep.per_client_accuracy
        assert len(accs) == 5
        assert rep.global_accuracy == accs[-1]
        assert accs[-1] >= oracle.global_accuracy - 0.03
        assert all(b >= a - 0.02 for a, b in zip(accs, accs[1:]))

    def test_empty_client_refits_received_model(self):
        # refitting on features sampled from a received mixture approximates it
        truth = fp.random_ground_truth(1, 3, 2, fp.CovarianceFamily.DIAG,
                                       seed=derive_seed(20, "t"), mean_scale=2.0)[0]
        x = fp.sample(truth, 600, seed=1)
        first, _ = fp.em_fit(x, 2, fp.CovarianceFamily.DIAG, fp.EmConfig(seed=2))
        resampled = fp.sample(first, 600, seed=3)
        refit, _ = fp.em_fit(resampled, 2, fp.CovarianceFamily.DIAG, fp.EmConfig(seed=4))
        held_out = fp.sample(truth, 2000, seed=5)
        gap = fp.avg_log_likelihood(first, held_out) - fp.avg_log_likelihood(refit, held_out)
        assert abs(gap) <= 0.1

    def test_chain_with_empty_middle_client(self):
        _, train, test = synthetic_problem(21, num_classes=3, dim=4, train_per_class=60)
        empty = fp.FeatureDataset(np.zeros((0, 4), np.float32), np.zeros(0, int), 3)
        clients = [train, empty, train]
        rep = quiet_run(clients, test, fp.RunConfig(
            mode="decentralized_chain", num_components=1,
            family=fp.CovarianceFamily.DIAG, seed=9))
        # the empty middle client still refits and forwards what it received
        assert rep.per_client_accuracy[1] is not None
        assert rep.comm.total_messages == 6

    def test_sample_counts_accumulate(self):
        _, train, test = synthetic_problem(22, num_classes=2, dim=3, train_per_class=40)
        clients = iid_clients(train, 3)
        rep = quiet_run(clients, test, fp.RunConfig(
            mode="decentralized_chain", num_components=1,
            family=fp.CovarianceFamily.DIAG, seed=10))
        sent = {}
        for m in rep.messages:
            sent.setdefault(m.client_id, {})[m.class_id] = m.sample_count
        for c in range(2):
            own = [int((cl.labels == c).sum()) for cl in clients]
            assert sent[0][c] == own[0]
            assert sent[1][c] == own[0] + own[1]


class TestBoundsInPipeline:
    def test_bound_reports_embedded(self):
        _, train, test = synthetic_problem(23, num_classes=3, dim=3,
                                           train_per_class=200, mean_scale=2.5)
        clients = iid_clients(train, 2)
        cfg = fp.RunConfig(mode="centralized", num_components=2,
                           family=fp.CovarianceFamily.DIAG, seed=11, compute_bounds=True)
        rep = quiet_run(clients, test, cfg)
        assert rep.bounds is not None and len(rep.bounds) == 2
        for item in rep.bounds:
            assert item is not None
            assert item["holds"] in (True, False)
            assert 0.0 <= item["bound_clamped"] <= 1.0
        doc = json.loads(rep.to_json())
        assert doc["bounds"][0]["actual_loss"] == rep.bounds[0]["actual_loss"]
