import json

import numpy as np
import pytest

import fedpft as fp
from fedpft.cli import main


def write_gen_config(path, classes=4, dim=6, components=1, family="diag",
                     train_per_class=120, test_per_class=60, seed=3):
    path.write_text(
        "[synth]\n"
        f"classes = {classes}\n"
        f"dim = {dim}\n"
        f"components = {components}\n"
        f"family = {family}\n"
        f"train_per_class = {train_per_class}\n"
        f"test_per_class = {test_per_class}\n"
        f"seed = {seed}\n"
        "mean_scale = 2.0\n"
    )


def write_run_config(path, data_dir, mode="centralized", components="2", family="diag",
                     scheme="dirichlet", num_clients=3, extra_run="", dp_section=""):
    path.write_text(
        "[data]\n"
        f"train = {data_dir}/train.fpft\n"
        f"test = {data_dir}/test.fpft\n"
        "normalize = false\n"
        "\n[partition]\n"
        f"scheme = {scheme}\n"
        f"num_clients = {num_clients}\n"
        "beta = 0.5\n"
        "seed = 2\n"
        "\n[run]\n"
        f"mode = {mode}\n"
        f"components = {components}\n"
        f"family = {family}\n"
        "seed = 11\n"
        f"{extra_run}"
        "\n[em]\n"
        "max_iters = 100\n"
        "\n[train]\n"
        "epochs = 60\n"
        f"{dp_section}"
    )


@pytest.fixture
def synth_dir(tmp_path):
    cfg = tmp_path / "gen.ini"
    write_gen_config(cfg)
    out = tmp_path / "data"
    assert main(["gen-synth", "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestGenSynth:
    def test_outputs_loadable(self, synth_dir):
        train = fp.load_features(synth_dir / "train.fpft")
        test = fp.load_features(synth_dir / "test.fpft")
        assert train.num_samples == 4 * 120
        assert test.num_samples == 4 * 60
        assert train.dim == 6

    def test_deterministic_bytes(self, tmp_path):
        cfg = tmp_path / "gen.ini"
        write_gen_config(cfg)
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        assert main(["gen-synth", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["gen-synth", "--config", str(cfg), "--out", str(out2)]) == 0
        for name in ("train.fpft", "test.fpft", "ground_truth.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_statistics_match_sidecar(self, synth_dir):
        train = fp.load_features(synth_dir / "train.fpft")
        sidecar = json.loads((synth_dir / "ground_truth.json").read_text())
        for c, entry in enumerate(sidecar["per_class"]):
            x = fp.class_conditional(train, c).astype(np.float64)
            weights = np.array(entry["weights"])
            means = np.array(entry["means"])
            covs = np.array(entry["covariances"])
            mix_mean = weights @ means
            spread = weights @ (covs + means**2) - mix_mean**2
            se = np.sqrt(spread / len(x))
            assert np.all(np.abs(x.mean(axis=0) - mix_mean) <= 5 * se)


class TestRun:
    def test_centralized_run(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir)
        out = tmp_path / "out"
        before = {p.name: p.read_bytes() for p in synth_dir.iterdir()}
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads((out / "report.json").read_text())
        assert 0.0 <= doc["global_accuracy"] <= 1.0
        assert doc["communication"]["total_bytes"] > 0
        assert (out / "messages.pftb").exists()
        msgs = fp.read_message_file(out / "messages.pftb")
        assert len(msgs) == doc["communication"]["total_messages"]
        # input files are never mutated
        assert {p.name: p.read_bytes() for p in synth_dir.iterdir()} == before

    def test_dp_with_k2_rejected_before_work(self, synth_dir, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        write_run_config(
            cfg, synth_dir, mode="centralized_dp", components="2", family="full",
            dp_section="\n[dp]\nepsilon = 1.0\ndelta = 0.01\n",
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
        err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert err["error"] == "ValueError"
        assert not (out / "report.json").exists()

    def test_same_seed_identical_reports(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
        assert (out1 / "messages.pftb").read_bytes() == (out2 / "messages.pftb").read_bytes()

    def test_threads_flag_does_not_change_report(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir)
        out1, out2 = tmp_path / "t1", tmp_path / "t4"
        assert main(["run", "--config", str(cfg), "--out", str(out1), "--threads", "1"]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out2), "--threads", "4"]) == 0
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()

    def test_missing_input_gives_error_json(self, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, tmp_path / "nowhere")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2
        err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert "error" in err and "message" in err

    def test_unknown_flag_is_an_error(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir)
        with pytest.raises(SystemExit) as exc:
            main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--frobnicate"])
        assert exc.value.code == 2

    def test_seed_override_changes_report(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out2), "--seed", "99"]) == 0
        d1 = json.loads((out1 / "report.json").read_text())
        d2 = json.loads((out2 / "report.json").read_text())
        assert d1["config"]["seed"] == 11
        assert d2["config"]["seed"] == 99

    def test_pft_threads_env_fallback(self, synth_dir, tmp_path, monkeypatch):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir)
        monkeypatch.setenv("PFT_THREADS", "2")
        out = tmp_path / "env"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "report.json").exists()


class TestBound:
    def test_bound_subcommand(self, synth_dir, tmp_path, capsys):
        cfg = tmp_path / "run.ini"
        write_run_config(cfg, synth_dir, num_clients=2)
        out = tmp_path / "out"
        assert main(["bound", "--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["bounds"] is not None
        assert any(item is not None for item in doc["bounds"])
        printed = capsys.readouterr().out
        assert "bound=" in printed


class TestReport:
    def test_summary_and_csv(self, synth_dir, tmp_path, capsys):
        reports = []
        for i, components in enumerate(("1", "3")):
            cfg = tmp_path / f"run{i}.ini"
            write_run_config(cfg, synth_dir, components=components)
            out = tmp_path / f"out{i}"
            assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
            reports.append(out / "report.json")
        csv_path = tmp_path / "summary.csv"
        assert main(["report", *map(str, reports), "--out", str(csv_path)]) == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "mode,family,components,epsilon,accuracy,bytes"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 2
        byte_counts = [int(r[5]) for r in rows]
        assert byte_counts == sorted(byte_counts)
        # non-decreasing component count maps to non-decreasing bytes
        assert int(rows[0][2]) <= int(rows[1][2])
        docs = {json.loads(p.read_text())["communication"]["total_bytes"] for p in reports}
        assert set(byte_counts) == docs

    def test_malformed_report_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["report", str(bad)]) == 2
