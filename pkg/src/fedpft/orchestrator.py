"""End-to-end one-shot federation pipelines.

Centralized mode: every client fits one mixture per locally present
class, the messages pass through the wire codec (so the server only ever
sees dequantized parameters), the server draws as many synthetic features
per message as the client used for fitting, pools them, and trains the
global head. Variants: a differentially private release path, a
decentralized chain where each client refits on its own features plus
features sampled from its predecessor's mixtures, the ensemble and
parameter-averaging baselines, and the oracle that trains directly on the
pooled real features.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds as bounds_mod
from . import classifier, dp, features, gmm, protocol
from ._seeding import derive_seed

MODES = (
    "centralized",
    "centralized_dp",
    "decentralized_chain",
    "ensemble_baseline",
    "average_baseline",
    "oracle_centralized",
)


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs besides the data.

    The master seed drives every randomized stage through derived
    per-task seeds; the seeds inside em and train configs are ignored.
    The private mode requires a DpConfig and forces a single
    full-covariance component per class.
    """

    mode: str
    num_components: int = 1
    family: gmm.CovarianceFamily = gmm.CovarianceFamily.DIAG
    em: gmm.EmConfig = field(default_factory=gmm.EmConfig)
    dp: dp.DpConfig | None = None
    train: classifier.TrainConfig = field(default_factory=classifier.TrainConfig)
    seed: int = 0
    normalize: bool = False
    synth_multiplier: float = 1.0
    dp_delta_per_class: bool = False
    average_by_samples: bool = False
    compute_bounds: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        object.__setattr__(self, "family", gmm.CovarianceFamily(self.family))
        if self.num_components < 1:
            raise ValueError("num_components must be >= 1")
        if self.synth_multiplier <= 0:
            raise ValueError("synth_multiplier must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.mode == "centralized_dp":
            if self.dp is None:
                raise ValueError("centralized_dp mode needs a DpConfig")
            if self.num_components != 1:
                raise ValueError("the private path supports only num_components=1")
            if self.family != gmm.CovarianceFamily.FULL:
                raise ValueError("the private path supports only the full covariance family")
        if self.compute_bounds and self.mode != "centralized":
            raise ValueError("bound evaluation needs the non-private centralized mode")


@dataclass
class ExperimentReport:
    """Self-contained record of one run.

    messages holds the exact transmitted wire messages for the modes that
    send any; it is not part of the JSON document.
    """

    config: dict
    global_accuracy: float
    per_client_accuracy: list
    comm: protocol.CommReport
    fit_stats: list
    synthetic_class_counts: dict | None
    bounds: list | None
    notes: list
    messages: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "global_accuracy": self.global_accuracy,
            "per_client_accuracy": self.per_client_accuracy,
            "communication": self.comm.to_dict(),
            "fit_stats": self.fit_stats,
            "synthetic_class_counts": self.synthetic_class_counts,
            "bounds": self.bounds,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate(head: classifier.ClassifierHead, test: features.FeatureDataset) -> float:
    """Accuracy of a head on a hold-out dataset."""
    if test.num_samples == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return 1.0 - classifier.zero_one_loss(head, test)


def run(clients, test, cfg: RunConfig) -> ExperimentReport:
    """Dispatch on cfg.mode."""
    if cfg.mode in ("centralized", "centralized_dp"):
        return run_centralized(clients, test, cfg)
    if cfg.mode == "decentralized_chain":
        return run_decentralized_chain(clients, test, cfg)
    if cfg.mode == "oracle_centralized":
        return _run_oracle(clients, test, cfg)
    return _run_local_head_baseline(clients, test, cfg)


def _check_federation(clients, test):
    clients = list(clients)
    if not clients:
        raise ValueError("need at least one client")
    dim, c = test.dim, test.num_classes
    for i, ds in enumerate(clients):
        if ds.dim != dim or ds.num_classes != c:
            raise ValueError(f"client {i} shape ({ds.dim}, {ds.num_classes}) != test ({dim}, {c})")
    return clients


def _maybe_normalize(clients, test, cfg):
    if cfg.normalize or cfg.mode == "centralized_dp":
        return [features.normalize_to_unit_ball(ds) for ds in clients], features.normalize_to_unit_ball(test)
    return clients, test


def _map_tasks(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _echo_config(cfg: RunConfig, clients, test) -> dict:
    # threads deliberately left out: it must not affect the report bytes
    return {
        "mode": cfg.mode,
        "num_components": cfg.num_components,
        "family": cfg.family.name.lower(),
        "seed": cfg.seed,
        "normalize": bool(cfg.normalize),
        "synth_multiplier": cfg.synth_multiplier,
        "dp_delta_per_class": bool(cfg.dp_delta_per_class),
        "average_by_samples": bool(cfg.average_by_samples),
        "compute_bounds": bool(cfg.compute_bounds),
        "em": {
            "max_iters": cfg.em.max_iters,
            "tol": cfg.em.tol,
            "reg_covar": cfg.em.reg_covar,
            "n_init": cfg.em.n_init,
        },
        "dp": None
        if cfg.dp is None
        else {"epsilon": cfg.dp.epsilon, "delta": cfg.dp.delta},
        "train": {
            "epochs": cfg.train.epochs,
            "batch_size": cfg.train.batch_size,
            "step_size": cfg.train.step_size,
            "weight_decay": cfg.train.weight_decay,
            "momentum": cfg.train.momentum,
        },
        "client_sizes": [ds.num_samples for ds in clients],
        "test_samples": test.num_samples,
        "num_classes": test.num_classes,
        "dim": test.dim,
    }


def _note(notes: list, message: str):
    notes.append(message)
    warnings.warn(message, stacklevel=3)


def _fit_messages(clients, cfg, notes):
    """Fit one mixture per (client, present class); returns (messages, stats)."""
    tasks = []
    for i, ds in enumerate(clients):
        if ds.num_samples == 0:
            _note(notes, f"client {i} has no samples; skipped")
            continue
        for label in np.unique(ds.labels):
            label = int(label)
            x = features.class_conditional(ds, label)
            if cfg.mode == "centralized_dp" and x.shape[0] < 2:
                _note(
                    notes,
                    f"client {i} class {label} has {x.shape[0]} sample(s); "
                    "private release needs at least 2, skipped",
                )
                continue
            tasks.append((i, label, x))

    def fit_one(task):
        i, label, x = task
        if cfg.mode == "centralized_dp":
            delta = 1.0 / x.shape[0] if cfg.dp_delta_per_class else cfg.dp.delta
            cfg_dp = dp.DpConfig(cfg.dp.epsilon, delta, seed=derive_seed(cfg.seed, "dp", i, label))
            params, stats = dp.dp_release(x, cfg_dp)
            stat = {
                "client": i,
                "class": label,
                "n": x.shape[0],
                "kind": "dp",
                "sigma": stats.sigma,
                "clipped_eigenvalues": stats.clipped_eigenvalues,
            }
        else:
            cfg_em = replace(cfg.em, seed=derive_seed(cfg.seed, "fit", i, label))
            params, stats = gmm.em_fit(x, cfg.num_components, cfg.family, cfg_em)
            stat = {
                "client": i,
                "class": label,
                "n": x.shape[0],
                "kind": "em",
                "avg_log_likelihood": stats.avg_log_likelihood,
                "iterations": stats.iterations,
                "converged": stats.converged,
                "trace": [float(v) for v in stats.trace],
            }
        return protocol.GmmMessage(i, label, x.shape[0], params), stat

    results = _map_tasks(fit_one, tasks, cfg.threads)
    return [r[0] for r in results], [r[1] for r in results]


def _through_codec(messages):
    """Encode and decode every message; results always use the wire values."""
    blobs = [protocol.encode(m) for m in messages]
    return protocol.account(messages), [protocol.decode(b) for b in blobs]


def _synthesize(decoded, cfg, num_classes, dim):
    """Sample each message's synthetic class-conditional feature set."""
    parts = []
    for msg in decoded:
        count = max(1, int(round(cfg.synth_multiplier * msg.sample_count)))
        draw = gmm.sample(
            msg.params, count, seed=derive_seed(cfg.seed, "sample", msg.client_id, msg.class_id)
        )
        parts.append((msg.client_id, msg.class_id, draw))
    feats = np.concatenate([p[2] for p in parts]).astype(np.float32)
    labels = np.concatenate([np.full(len(p[2]), p[1], dtype=np.int64) for p in parts])
    ds = features.FeatureDataset(feats, labels, num_classes, dataset_id="synthetic")
    return ds, parts


def run_centralized(clients, test, cfg: RunConfig) -> ExperimentReport:
    """One round: fit per class, transmit, sample, train, evaluate."""
    if cfg.mode not in ("centralized", "centralized_dp"):
        raise ValueError(f"run_centralized cannot execute mode {cfg.mode!r}")
    clients = _check_federation(clients, test)
    notes: list[str] = []
    clients_used, test_used = _maybe_normalize(clients, test, cfg)
    messages, fit_stats = _fit_messages(clients_used, cfg, notes)
    if not messages:
        raise ValueError("no client contributed a message; the federation is empty")
    comm, decoded = _through_codec(messages)
    synthetic, parts = _synthesize(decoded, cfg, test.num_classes, test.dim)
    head, _ = classifier.train_head(
        synthetic.features,
        synthetic.labels,
        test.num_classes,
        replace(cfg.train, seed=derive_seed(cfg.seed, "train")),
    )
    per_client = [
        None if ds.num_samples == 0 else 1.0 - classifier.zero_one_loss(head, ds)
        for ds in clients_used
    ]
    bound_reports = None
    if cfg.compute_bounds:
        bound_reports = _client_bounds(clients_used, parts, head, fit_stats, cfg, notes)
    counts = {int(k): int(v) for k, v in zip(*np.unique(synthetic.labels, return_counts=True))}
    return ExperimentReport(
        config=_echo_config(cfg, clients, test),
        global_accuracy=evaluate(head, test_used),
        per_client_accuracy=per_client,
        comm=comm,
        fit_stats=fit_stats,
        synthetic_class_counts={str(k): counts[k] for k in sorted(counts)},
        bounds=bound_reports,
        notes=notes,
        messages=messages,
    )


def _client_bounds(clients_used, parts, head, fit_stats, cfg, notes):
    reports = []
    ll_by_client: dict[int, dict[int, float]] = {}
    for stat in fit_stats:
        if stat["kind"] == "em":
            ll_by_client.setdefault(stat["client"], {})[stat["class"]] = stat["avg_log_likelihood"]
    synth_by_client: dict[int, dict[int, np.ndarray]] = {}
    for client_id, class_id, draw in parts:
        synth_by_client.setdefault(client_id, {})[class_id] = draw
    for i, ds in enumerate(clients_used):
        if ds.num_samples == 0 or i not in synth_by_client:
            reports.append(None)
            continue
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                report = bounds_mod.verify_bound(
                    ds,
                    synth_by_client[i],
                    head,
                    ll_by_client.get(i, {}),
                    dequant_seed=derive_seed(cfg.seed, "dequant", i),
                )
            for w in caught:
                notes.append(f"client {i}: {w.message}")
            reports.append(report.to_dict())
        except ValueError as exc:
            _note(notes, f"client {i}: bound not estimable ({exc})")
            reports.append(None)
    return reports


def run_decentralized_chain(clients, test, cfg: RunConfig) -> ExperimentReport:
    """Linear topology: fit, forward, resample, refit, hop by hop.

    Every client trains a local head on its own features united with the
    features sampled from the mixtures it received; forwarded messages
    carry sample counts accumulated along the chain.
    """
    if cfg.mode != "decentralized_chain":
        raise ValueError(f"run_decentralized_chain cannot execute mode {cfg.mode!r}")
    clients = _check_federation(clients, test)
    if len(clients) < 2:
        raise ValueError("a chain needs at least 2 clients")
    notes: list[str] = []
    clients_used, test_used = _maybe_normalize(clients, test, cfg)
    num_classes, dim = test.num_classes, test.dim
    received: list[protocol.GmmMessage] = []
    transmitted: list[protocol.GmmMessage] = []
    fit_stats: list[dict] = []
    per_client_accuracy: list = []
    for pos, ds in enumerate(clients_used):
        rec_by_class = {m.class_id: m for m in received}
        own_classes = set(int(v) for v in np.unique(ds.labels)) if ds.num_samples else set()
        labels_here = sorted(own_classes | set(rec_by_class))
        union_by_class = {}
        counts_out = {}
        for label in labels_here:
            own = (
                features.class_conditional(ds, label).astype(np.float64)
                if label in own_classes
                else np.empty((0, dim))
            )
            total = own.shape[0]
            if label in rec_by_class:
                msg = rec_by_class[label]
                drawn = gmm.sample(
                    msg.params,
                    max(1, int(round(cfg.synth_multiplier * msg.sample_count))),
                    seed=derive_seed(cfg.seed, "chain_sample", pos, label),
                )
                own = np.concatenate([own, drawn]) if total else drawn
                total += msg.sample_count
            union_by_class[label] = own
            counts_out[label] = total
        if not union_by_class:
            _note(notes, f"chain client {pos} has no data and received nothing")
            per_client_accuracy.append(None)
            received = []
            continue

        def refit(label):
            cfg_em = replace(cfg.em, seed=derive_seed(cfg.seed, "chain_fit", pos, label))
            params, stats = gmm.em_fit(union_by_class[label], cfg.num_components, cfg.family, cfg_em)
            stat = {
                "client": pos,
                "class": label,
                "n": union_by_class[label].shape[0],
                "kind": "em",
                "avg_log_likelihood": stats.avg_log_likelihood,
                "iterations": stats.iterations,
                "converged": stats.converged,
                "trace": [float(v) for v in stats.trace],
            }
            return protocol.GmmMessage(pos, label, counts_out[label], params), stat

        results = _map_tasks(refit, labels_here, cfg.threads)
        outgoing = [r[0] for r in results]
        fit_stats.extend(r[1] for r in results)
        train_x = np.concatenate([union_by_class[label] for label in labels_here])
        train_y = np.concatenate(
            [np.full(len(union_by_class[label]), label, dtype=np.int64) for label in labels_here]
        )
        head, _ = classifier.train_head(
            train_x, train_y, num_classes, replace(cfg.train, seed=derive_seed(cfg.seed, "chain_train", pos))
        )
        per_client_accuracy.append(evaluate(head, test_used))
        if pos < len(clients_used) - 1:
            transmitted.extend(outgoing)
            received = [protocol.decode(protocol.encode(m)) for m in outgoing]
    final = [a for a in per_client_accuracy if a is not None]
    if not final:
        raise ValueError("no chain client could train a head")
    return ExperimentReport(
        config=_echo_config(cfg, clients, test),
        global_accuracy=per_client_accuracy[-1] if per_client_accuracy[-1] is not None else final[-1],
        per_client_accuracy=per_client_accuracy,
        comm=protocol.account(transmitted),
        fit_stats=fit_stats,
        synthetic_class_counts=None,
        bounds=None,
        notes=notes,
        messages=transmitted,
    )


def _run_oracle(clients, test, cfg: RunConfig) -> ExperimentReport:
    """Train the head on the pooled real features of every client."""
    clients = _check_federation(clients, test)
    notes: list[str] = []
    clients_used, test_used = _maybe_normalize(clients, test, cfg)
    pools = [ds for ds in clients_used if ds.num_samples > 0]
    if not pools:
        raise ValueError("every client is empty")
    feats = np.concatenate([ds.features for ds in pools]).astype(np.float64)
    labels = np.concatenate([ds.labels for ds in pools])
    head, _ = classifier.train_head(
        feats, labels, test.num_classes, replace(cfg.train, seed=derive_seed(cfg.seed, "train"))
    )
    per_client = [
        None if ds.num_samples == 0 else 1.0 - classifier.zero_one_loss(head, ds)
        for ds in clients_used
    ]
    return ExperimentReport(
        config=_echo_config(cfg, clients, test),
        global_accuracy=evaluate(head, test_used),
        per_client_accuracy=per_client,
        comm=protocol.account([]),
        fit_stats=[],
        synthetic_class_counts=None,
        bounds=None,
        notes=notes,
    )


def _run_local_head_baseline(clients, test, cfg: RunConfig) -> ExperimentReport:
    """Ensemble and parameter-averaging baselines over local heads."""
    clients = _check_federation(clients, test)
    notes: list[str] = []
    clients_used, test_used = _maybe_normalize(clients, test, cfg)
    tasks = []
    for i, ds in enumerate(clients_used):
        if ds.num_samples == 0:
            _note(notes, f"client {i} has no samples; skipped")
            continue
        tasks.append((i, ds))

    def train_local(task):
        i, ds = task
        head, _ = classifier.train_head(
            ds.features.astype(np.float64),
            ds.labels,
            test.num_classes,
            replace(cfg.train, seed=derive_seed(cfg.seed, "local_train", i)),
        )
        return i, head

    trained = _map_tasks(train_local, tasks, cfg.threads)
    if not trained:
        raise ValueError("every client is empty")
    heads = [h for _, h in trained]
    if cfg.mode == "ensemble_baseline":
        predicted = classifier.ensemble_predict(heads, test_used.features)
        global_accuracy = float((predicted == test_used.labels).mean())
    else:
        if cfg.average_by_samples:
            head_weights = [clients_used[i].num_samples for i, _ in trained]
        else:
            head_weights = None
        merged = classifier.average_heads(heads, head_weights)
        global_accuracy = evaluate(merged, test_used)
    acc_by_client = {i: evaluate(head, test_used) for i, head in trained}
    per_client = [acc_by_client.get(i) for i in range(len(clients_used))]
    return ExperimentReport(
        config=_echo_config(cfg, clients, test),
        global_accuracy=global_accuracy,
        per_client_accuracy=per_client,
        comm=protocol.account([]),
        fit_stats=[],
        synthetic_class_counts=None,
        bounds=None,
        notes=notes,
    )
