"""Command-line front end.

Subcommands:
  gen-synth  write synthetic FPFT1 train/test files plus a ground-truth sidecar
  run        execute one experiment from a config file and write report.json
  bound      run the centralized pipeline with the local-accuracy bound evaluated
  report     summarize report.json files as a table and a plot-ready CSV

Configs are INI files; paths inside them resolve relative to the config
file. --seed and --threads override the config, and the PFT_THREADS
environment variable is the fallback for --threads.
"""

import argparse
import configparser
import csv
import json
import os
import sys
from pathlib import Path

from . import classifier, dp, features, gmm, orchestrator, protocol


def _config_parser(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser.read(path)
    return parser


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _gmm_to_jsonable(params: gmm.GmmParams) -> dict:
    return {
        "family": params.family.name.lower(),
        "weights": params.weights.tolist(),
        "means": params.means.tolist(),
        "covariances": params.covariances.tolist(),
    }


def cmd_gen_synth(args) -> int:
    cfg_path = Path(args.config).resolve()
    parser = _config_parser(cfg_path)
    sec = parser["synth"]
    seed = args.seed if args.seed is not None else sec.getint("seed", 0)
    family = gmm.CovarianceFamily.from_name(sec.get("family", "diag"))
    num_classes = sec.getint("classes")
    truth = features.random_ground_truth(
        num_classes=num_classes,
        dim=sec.getint("dim"),
        num_components=sec.getint("components", 1),
        family=family,
        seed=seed,
        mean_scale=sec.getfloat("mean_scale", 3.0),
        cov_scale=sec.getfloat("cov_scale", 1.0),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = features.synth_generate(
        features.SynthSpec(truth, sec.getint("train_per_class"), seed=seed), dataset_id="train"
    )
    test = features.synth_generate(
        features.SynthSpec(truth, sec.getint("test_per_class"), seed=seed + 1), dataset_id="test"
    )
    features.save_features(train, out / "train.fpft")
    features.save_features(test, out / "test.fpft")
    sidecar = {
        "classes": num_classes,
        "dim": sec.getint("dim"),
        "components": sec.getint("components", 1),
        "family": family.name.lower(),
        "seed": seed,
        "train_per_class": sec.getint("train_per_class"),
        "test_per_class": sec.getint("test_per_class"),
        "per_class": [_gmm_to_jsonable(p) for p in truth],
    }
    (out / "ground_truth.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"wrote {out / 'train.fpft'} ({train.num_samples} rows), "
          f"{out / 'test.fpft'} ({test.num_samples} rows)")
    return 0


def _threads_from(args, parser) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PFT_THREADS")
    if env is not None:
        return int(env)
    if parser.has_section("run"):
        return parser["run"].getint("threads", 1)
    return 1


def _run_config(parser: configparser.ConfigParser, args, force_bounds: bool) -> orchestrator.RunConfig:
    run_sec = parser["run"]
    seed = args.seed if args.seed is not None else run_sec.getint("seed", 0)
    em_sec = parser["em"] if parser.has_section("em") else {}
    em = gmm.EmConfig(
        max_iters=int(em_sec.get("max_iters", 200)),
        tol=float(em_sec.get("tol", 1e-5)),
        reg_covar=float(em_sec.get("reg_covar", 1e-6)),
        n_init=int(em_sec.get("n_init", 3)),
    )
    train_sec = parser["train"] if parser.has_section("train") else {}
    train = classifier.TrainConfig(
        epochs=int(train_sec.get("epochs", 100)),
        batch_size=int(train_sec.get("batch_size", 256)),
        step_size=float(train_sec.get("step_size", 1e-3)),
        weight_decay=float(train_sec.get("weight_decay", 0.0)),
    )
    dp_cfg = None
    if parser.has_section("dp") and parser["dp"].get("epsilon") is not None:
        dp_cfg = dp.DpConfig(
            epsilon=parser["dp"].getfloat("epsilon"),
            delta=parser["dp"].getfloat("delta", 0.01),
        )
    if not parser.has_section("data"):
        raise ValueError("config needs a [data] section with train and test paths")
    return orchestrator.RunConfig(
        mode=run_sec.get("mode", "centralized"),
        num_components=run_sec.getint("components", 1),
        family=gmm.CovarianceFamily.from_name(run_sec.get("family", "diag")),
        em=em,
        dp=dp_cfg,
        train=train,
        seed=seed,
        normalize=parser["data"].getboolean("normalize", False),
        synth_multiplier=run_sec.getfloat("synth_multiplier", 1.0),
        dp_delta_per_class=parser["dp"].getboolean("delta_per_class", False)
        if parser.has_section("dp")
        else False,
        average_by_samples=run_sec.getboolean("average_by_samples", False),
        compute_bounds=force_bounds or run_sec.getboolean("compute_bounds", False),
        threads=_threads_from(args, parser),
    )


def _load_federation(parser: configparser.ConfigParser, base: Path, seed: int):
    data_sec = parser["data"]
    train = features.load_features(_resolve(base, data_sec["train"]))
    test = features.load_features(_resolve(base, data_sec["test"]))
    if not parser.has_section("partition"):
        return [train], test
    part = parser["partition"]
    scheme = part.get("scheme", "dirichlet")
    if scheme == "none":
        return [train], test
    spec = features.PartitionSpec(
        scheme=scheme,
        num_clients=part.getint("num_clients"),
        seed=part.getint("seed", seed),
        beta=part.getfloat("beta", fallback=None),
    )
    return features.partition(train, spec), test


def _execute_run(args, force_bounds: bool) -> int:
    cfg_path = Path(args.config).resolve()
    parser = _config_parser(cfg_path)
    cfg = _run_config(parser, args, force_bounds)
    clients, test = _load_federation(parser, cfg_path.parent, cfg.seed)
    report = orchestrator.run(clients, test, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    report_path.write_text(report.to_json())
    if report.messages:
        protocol.write_message_file(out / "messages.pftb", report.messages)
    print(f"mode={cfg.mode} accuracy={report.global_accuracy:.4f} "
          f"bytes={report.comm.total_bytes} -> {report_path}")
    if force_bounds and report.bounds:
        for i, item in enumerate(report.bounds):
            if item is None:
                continue
            print(
                f"client {i}: actual_loss={item['actual_loss']:.4f} "
                f"bound={item['bound']:.4f} holds={item['holds']}"
            )
    return 0


def cmd_run(args) -> int:
    return _execute_run(args, force_bounds=False)


def cmd_bound(args) -> int:
    return _execute_run(args, force_bounds=True)


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        doc = json.loads(Path(path).read_text())
        cfg = doc["config"]
        rows.append(
            {
                "mode": cfg["mode"],
                "family": cfg["family"],
                "components": cfg["num_components"],
                "epsilon": "" if cfg["dp"] is None else cfg["dp"]["epsilon"],
                "accuracy": doc["global_accuracy"],
                "bytes": doc["communication"]["total_bytes"],
            }
        )
    rows.sort(key=lambda r: r["bytes"])
    header = ["mode", "family", "components", "epsilon", "accuracy", "bytes"]
    widths = [max(len(h), *(len(str(r[h])) for r in rows)) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(str(r[h]).ljust(w) for h, w in zip(header, widths)))
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpft", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-synth", help="generate synthetic feature files")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(func=cmd_gen_synth)

    run = sub.add_parser("run", help="execute one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--threads", type=int, default=None)
    run.set_defaults(func=cmd_run)

    bound = sub.add_parser("bound", help="run with the local-accuracy bound evaluated")
    bound.add_argument("--config", required=True)
    bound.add_argument("--out", required=True)
    bound.add_argument("--seed", type=int, default=None)
    bound.add_argument("--threads", type=int, default=None)
    bound.set_defaults(func=cmd_bound)

    rep = sub.add_parser("report", help="summarize run reports")
    rep.add_argument("reports", nargs="+")
    rep.add_argument("--out", default="fedpft_report.csv")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a machine-readable failure
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
