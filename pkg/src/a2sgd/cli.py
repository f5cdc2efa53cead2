"""Experiment runner: run (algorithm x model x workers) configurations, emit
run.json / ledger.csv / hist/*.csv, compare finished runs, and benchmark the
codecs.

Exit codes: 0 success, 2 configuration error, 3 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import codecs
from .analysis import histogram, histogram_to_csv
from .cluster import CostModel
from .data import make_synthetic
from .models import build_model
from .numkit import make_rng, sample_normal
from .train import LrSchedule, run_training

ALGORITHMS = ("dense", "a2sgd", "topk", "gaussiank", "qsgd")
MODELS = ("quadratic", "linreg", "logreg", "mlp3")
SCHEDULES = ("constant", "poly", "inv-sqrt")

DEFAULT_LR = {"quadratic": 0.1, "linreg": 0.05, "logreg": 0.5, "mlp3": 0.01}


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to exit code 2."""


@dataclass
class ExperimentConfig:
    algo: str = "a2sgd"
    model: str = "mlp3"
    workers: int = 4
    batch: int = 128
    epochs: int = 2
    lr: float | None = None
    lr_schedule: str = "constant"
    lam: float = 0.01
    k_ratio: float = codecs.DEFAULT_K_RATIO
    qsgd_level: int = codecs.DEFAULT_QSGD_LEVEL
    seed: int = 0
    alpha: float = 1e-5
    beta: float = 1e-11
    out: str = "run"

    def validate(self) -> None:
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.lr_schedule not in SCHEDULES:
            raise ConfigError(f"lr-schedule must be one of {SCHEDULES}, got {self.lr_schedule!r}")
        if not 0.0 < self.k_ratio <= 1.0:
            raise ConfigError(f"k-ratio must lie in (0, 1], got {self.k_ratio}")
        if self.qsgd_level < 1:
            raise ConfigError(f"qsgd-level must be >= 1, got {self.qsgd_level}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha/beta must be >= 0, got {self.alpha}/{self.beta}")

    def effective_lr(self) -> float:
        return self.lr if self.lr is not None else DEFAULT_LR[self.model]


def _dataset_for(cfg: ExperimentConfig):
    """Fixed synthetic datasets per model kind (seeded by the run seed)."""
    if cfg.model == "quadratic":
        return make_synthetic("blobs", 4096, 8, cfg.seed, centers=4, center_scale=1.0, spread=0.5)
    if cfg.model == "linreg":
        return make_synthetic("linear", 4096, 16, cfg.seed, noise=0.1)
    if cfg.model == "logreg":
        return make_synthetic("blobs", 4096, 16, cfg.seed, centers=2, center_scale=2.0, spread=1.0)
    return make_synthetic("blobs", 10_000, 64, cfg.seed, centers=10, center_scale=1.0, spread=2.0)


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Execute one configuration and write its artifacts under cfg.out."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _dataset_for(cfg)
    model = build_model(cfg.model)
    schedule = LrSchedule(kind=cfg.lr_schedule, eta0=cfg.effective_lr(), lam=cfg.lam)
    result = run_training(
        model, dataset, cfg.algo, cfg.workers, cfg.batch, cfg.epochs, schedule, cfg.seed,
        cost=CostModel(cfg.alpha, cfg.beta), k_ratio=cfg.k_ratio, qsgd_level=cfg.qsgd_level,
    )

    doc = {
        "config": {**asdict(cfg), "lr": cfg.effective_lr()},
        "loss": result.losses,
        "acc": result.accuracies,
        "central_mass": result.central_mass,
        "bits_total": result.bits_total,
        "modeled_comm_s": result.modeled_comm_s,
    }
    with open(out / "run.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    # Measured wall/encode seconds vary run to run, so they live apart from
    # the byte-reproducible run.json.
    with open(out / "timing.json", "w") as fh:
        json.dump({"wall_s": result.wall_s, "encode_s": result.encode_s}, fh, indent=2)
        fh.write("\n")
    result.ledger.to_csv(out / "ledger.csv")

    hist_dir = out / "hist"
    hist_dir.mkdir(exist_ok=True)
    tags = []
    for iteration, grad in result.grad_snapshots:
        hist = histogram(grad, tag=iteration)
        histogram_to_csv(hist, hist_dir / f"{iteration}.csv")
        tags.append(iteration)
    with open(hist_dir / "manifest.json", "w") as fh:
        json.dump({"iterations": tags}, fh, indent=2)
        fh.write("\n")
    return out


def compare_runs(run_dirs: list[str], out_path: str) -> Path:
    """Tabulate finished runs: accuracy, bits per worker, comm and encode time."""
    if len(run_dirs) < 2:
        raise ConfigError(f"compare needs at least 2 run directories, got {len(run_dirs)}")
    rows = []
    for d in run_dirs:
        run_file = Path(d) / "run.json"
        timing_file = Path(d) / "timing.json"
        if not run_file.exists() or not timing_file.exists():
            raise ConfigError(f"missing run artifacts under {d!r}")
        doc = json.loads(run_file.read_text())
        timing = json.loads(timing_file.read_text())
        workers = doc["config"]["workers"]
        rows.append({
            "algo": doc["config"]["algo"],
            "final_loss": doc["loss"][-1],
            "final_acc": doc["acc"][-1] if doc["acc"] else "",
            "bits_per_worker": doc["bits_total"] // workers,
            "modeled_comm_s": doc["modeled_comm_s"],
            "encode_s": timing["encode_s"],
        })
    path = Path(out_path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def bench_codecs(n_list: list[int], repeats: int, out_path: str, seed: int = 0) -> Path:
    """Median steady-state encode seconds per codec and size.

    Codec states persist across repeats, as they do across training
    iterations; the first (warm-up) call per codec/size is not measured.
    """
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n-list must be non-empty and strictly ascending")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")

    encoders = {
        "dense": lambda v, _state: codecs.dense_encode(v),
        "a2sgd": codecs.a2sgd_encode,
        "topk": codecs.topk_encode,
        "gaussiank": codecs.gaussian_k_encode,
        "qsgd": codecs.qsgd_encode,
    }

    rows = []
    rng = make_rng(seed, stream=0)
    for n in n_list:
        v = sample_normal(rng, n)
        states = {name: codecs.CodecState(n=n, rng=make_rng(seed, stream=1)) for name in encoders}
        for name, fn in encoders.items():
            fn(v, states[name])
        samples: dict[str, list[float]] = {name: [] for name in encoders}
        for _ in range(repeats):
            for name, fn in encoders.items():
                t0 = time.perf_counter()
                fn(v, states[name])
                samples[name].append(time.perf_counter() - t0)
        for name in encoders:
            rows.append({"codec": name, "n": n, "median_s": float(np.median(samples[name]))})

    path = Path(out_path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["codec", "n", "median_s"])
        writer.writeheader()
        writer.writerows(rows)
    return path


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--algo", choices=ALGORITHMS)
    parser.add_argument("--model", choices=MODELS)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lr-schedule", dest="lr_schedule", choices=SCHEDULES)
    parser.add_argument("--lam", type=float)
    parser.add_argument("--k-ratio", dest="k_ratio", type=float)
    parser.add_argument("--qsgd-level", dest="qsgd_level", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--out")


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file first, then flag overrides; unknown keys are rejected."""
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {args.config}")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        known = {f.name for f in fields(ExperimentConfig)}
        for key in file_values:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        values.update(file_values)
    for f in fields(ExperimentConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="a2sgd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment configuration")
    _add_run_flags(run_p)

    cmp_p = sub.add_parser("compare", help="tabulate two or more finished runs")
    cmp_p.add_argument("runs", nargs="+", help="run output directories")
    cmp_p.add_argument("--out", default="compare.csv")

    bench_p = sub.add_parser("bench", help="benchmark codec encode times")
    bench_p.add_argument("--n-list", default="100000,1000000",
                         help="comma-separated ascending sizes")
    bench_p.add_argument("--repeats", type=int, default=9)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--out", default="bench.csv")

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("-"):
        argv = ["run"] + argv  # bare flags imply the run subcommand
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            out = run_experiment(load_config(args))
            print(f"run artifacts written to {out}")
        elif args.command == "compare":
            out = compare_runs(args.runs, args.out)
            print(f"comparison written to {out}")
        else:
            n_list = [int(float(x)) for x in str(args.n_list).split(",") if x]
            out = bench_codecs(n_list, args.repeats, args.out, seed=args.seed)
            print(f"benchmark written to {out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report and signal failure
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
