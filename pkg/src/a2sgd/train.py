"""Data-parallel training loop parameterized by gradient codec.

One simulated worker per rank; the only cross-worker interaction is the
per-iteration collective. The two-mean path follows: local gradient ->
two-mean encode -> allreduce of the means -> error-vector decode -> local
update, with one dense synchronization at the very end so all workers finish
with bit-identical weights.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import codecs
from .cluster import Cluster, CostModel, reconstruct_average
from .codecs import CodecState, dense_encode
from .data import Dataset, iterate_batches, shard_indices
from .numkit import make_rng

ALGORITHMS = ("dense", "a2sgd", "topk", "gaussiank", "qsgd")


@dataclass
class LrSchedule:
    """Learning rate schedules: constant, polynomial decay eta0/(1 + lam*t),
    and horizon-scaled inverse square root eta0/sqrt(total_steps + 1)."""

    kind: str = "constant"
    eta0: float = 0.01
    lam: float = 0.0
    total_steps: int | None = None

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.kind not in ("constant", "poly", "inv-sqrt"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "inv-sqrt" and self.total_steps is None:
            raise ValueError("inv-sqrt schedule needs total_steps")

    def eta(self, t: int) -> float:
        if self.kind == "constant":
            return self.eta0
        if self.kind == "poly":
            return self.eta0 / (1.0 + self.lam * t)
        return self.eta0 / math.sqrt(self.total_steps + 1)


@dataclass
class WorkerState:
    """One simulated worker: rank, its weight copy, and codec state."""

    rank: int
    weights: np.ndarray
    codec: CodecState


@dataclass
class RunResult:
    """Everything a finished run reports."""

    losses: list[float]
    accuracies: list[float]
    central_mass: list[float]
    grad_snapshots: list[tuple[int, np.ndarray]]
    bits_total: int
    modeled_comm_s: float
    wall_s: float
    encode_s: float
    weights: np.ndarray
    ledger: object


def compute_gradient(model, weights: np.ndarray, X: np.ndarray, y=None) -> np.ndarray:
    """Exact analytic gradient of the model loss over one batch."""
    if X.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    return model.gradient(weights, X, y)


def make_workers(model, num_workers: int, seed: int, *, k_ratio: float = codecs.DEFAULT_K_RATIO,
                 qsgd_level: int = codecs.DEFAULT_QSGD_LEVEL, k_override: int | None = None) -> list[WorkerState]:
    """Workers with identical seeded initial weights and per-rank codec streams."""
    w0 = model.init_weights(make_rng(seed, stream=0))
    return [
        WorkerState(
            rank=p,
            weights=w0.copy(),
            codec=CodecState(n=model.n, k_ratio=k_ratio, qsgd_level=qsgd_level,
                             k_override=k_override, rng=make_rng(seed, stream=1000 + p)),
        )
        for p in range(num_workers)
    ]


def _worker_gradients(model, workers, batches):
    return [compute_gradient(model, w.weights, X, y) for w, (X, y) in zip(workers, batches)]


def dense_step(cluster: Cluster, model, workers, batches, eta: float, iteration: int):
    """Full-gradient allreduce: every worker applies the same averaged gradient."""
    grads = _worker_gradients(model, workers, batches)
    t0 = time.perf_counter()
    payloads = [dense_encode(g) for g in grads]
    encode_s = time.perf_counter() - t0
    for w, p in zip(workers, payloads):
        cluster.record_traffic(w.rank, iteration, "dense", p)
    avg = cluster.allreduce_average([p.scalars for p in payloads])
    for w in workers:
        w.weights -= eta * avg
    return grads[0], encode_s


def a2sgd_step(cluster: Cluster, model, workers, batches, eta: float, iteration: int):
    """Two-mean step: encode, allreduce the means, decode with the local errors."""
    grads = _worker_gradients(model, workers, batches)
    t0 = time.perf_counter()
    encoded = [codecs.a2sgd_encode(g, w.codec) for g, w in zip(grads, workers)]
    encode_s = time.perf_counter() - t0
    local_means = []
    for w, (payload, _, _) in zip(workers, encoded):
        cluster.record_traffic(w.rank, iteration, "a2sgd", payload)
        local_means.append(codecs.TwoMeans(payload.scalars[0], payload.scalars[1]))
    global_means = cluster.allreduce_average(local_means)
    for w, (_, eps, mask) in zip(workers, encoded):
        w.weights -= eta * codecs.a2sgd_decode(global_means, mask, eps)
    return grads[0], encode_s


def sparse_step(cluster: Cluster, model, workers, batches, eta: float, iteration: int, kind: str):
    """Top-K / Gaussian-K step: allgather sparse payloads and apply the union average."""
    encode = codecs.topk_encode if kind == "topk" else codecs.gaussian_k_encode
    grads = _worker_gradients(model, workers, batches)
    t0 = time.perf_counter()
    payloads = [encode(g, w.codec)[0] for g, w in zip(grads, workers)]
    encode_s = time.perf_counter() - t0
    gathered = cluster.allgather(payloads)
    total_bits = sum(p.bit_cost for p in gathered)
    for w, p in zip(workers, payloads):
        cluster.record_traffic(w.rank, iteration, kind, p, bits_received=total_bits - p.bit_cost)
    avg = reconstruct_average(gathered, model.n)
    for w in workers:
        w.weights -= eta * avg
    return grads[0], encode_s


def qsgd_step(cluster: Cluster, model, workers, batches, eta: float, iteration: int):
    """Quantized step: allgather the stochastically quantized vectors and average."""
    grads = _worker_gradients(model, workers, batches)
    t0 = time.perf_counter()
    payloads = [codecs.qsgd_encode(g, w.codec)[0] for g, w in zip(grads, workers)]
    encode_s = time.perf_counter() - t0
    gathered = cluster.allgather(payloads)
    total_bits = sum(p.bit_cost for p in gathered)
    for w, p in zip(workers, payloads):
        cluster.record_traffic(w.rank, iteration, "qsgd", p, bits_received=total_bits - p.bit_cost)
    avg = reconstruct_average(gathered, model.n)
    for w in workers:
        w.weights -= eta * avg
    return grads[0], encode_s


def final_sync(cluster: Cluster, model, workers, iteration: int):
    """One dense allreduce leaving every worker with bit-identical weights."""
    payloads = [dense_encode(w.weights) for w in workers]
    for w, p in zip(workers, payloads):
        cluster.record_traffic(w.rank, iteration, "dense", p)
    avg = cluster.allreduce_average([p.scalars for p in payloads])
    for w in workers:
        w.weights = avg.copy()


def step_for(algo: str):
    if algo == "dense":
        return dense_step
    if algo == "a2sgd":
        return a2sgd_step
    if algo == "topk":
        return lambda *a: sparse_step(*a, kind="topk")
    if algo == "gaussiank":
        return lambda *a: sparse_step(*a, kind="gaussiank")
    if algo == "qsgd":
        return qsgd_step
    raise ValueError(f"unknown algorithm {algo!r}")


def central_band_half_width(g: np.ndarray, band: float = 0.1) -> float:
    """Half-width of the central `band` slice of the symmetric range [-max|g|, max|g|]."""
    return band * float(np.max(np.abs(g)))


def central_mass_fraction(g: np.ndarray, half_width: float) -> float:
    """Fraction of elements with |g_i| <= half_width."""
    if half_width <= 0.0:
        return 1.0
    return float(np.mean(np.abs(g) <= half_width))


def run_training(model, dataset: Dataset, algo: str, num_workers: int, batch_size: int,
                 epochs: int, schedule: LrSchedule, seed: int, *,
                 cost: CostModel | None = None, k_ratio: float = codecs.DEFAULT_K_RATIO,
                 qsgd_level: int = codecs.DEFAULT_QSGD_LEVEL, shuffle: bool = True,
                 snapshot_gradients: bool = True) -> RunResult:
    """Run `epochs` of data-parallel SGD and collect the run diagnostics.

    The two-mean algorithm spends its last iteration on the dense final sync;
    the baselines take a gradient step every iteration. Loss is the current
    global mini-batch loss on worker 0's weights; accuracy (classification
    models) is evaluated over the full dataset once per epoch.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    if num_workers < 1:
        raise ValueError(f"num_workers must be >= 1, got {num_workers}")
    started = time.perf_counter()
    cluster = Cluster(num_workers, cost)
    workers = make_workers(model, num_workers, seed, k_ratio=k_ratio, qsgd_level=qsgd_level)
    step = step_for(algo)
    iters_per_epoch = math.ceil(len(dataset) / batch_size)
    total_steps = epochs * iters_per_epoch
    if schedule.kind == "inv-sqrt" and schedule.total_steps is None:
        schedule.total_steps = total_steps

    losses: list[float] = []
    accuracies: list[float] = []
    central: list[float] = []
    snapshots: list[tuple[int, np.ndarray]] = []
    encode_s = 0.0
    band_half = None  # worker-0 band fixed at the first iteration; shared by all checkpoints
    last_grad = None
    t = 0
    for epoch in range(epochs):
        epoch_fractions: list[float] = []
        for batch_idx in iterate_batches(len(dataset), batch_size, epoch, seed, shuffle=shuffle):
            X_batch = dataset.X[batch_idx]
            y_batch = dataset.y[batch_idx] if dataset.y is not None else None
            batches = []
            for p in range(num_workers):
                rows = shard_indices(np.arange(len(batch_idx)), p, num_workers)
                batches.append((X_batch[rows], y_batch[rows] if y_batch is not None else None))
            if algo == "a2sgd" and t == total_steps - 1:
                final_sync(cluster, model, workers, t)
            else:
                last_grad, dt = step(cluster, model, workers, batches, schedule.eta(t), t)
                encode_s += dt
                if band_half is None:
                    band_half = central_band_half_width(last_grad)
                epoch_fractions.append(central_mass_fraction(last_grad, band_half))
            losses.append(model.loss(workers[0].weights, X_batch, y_batch))
            t += 1
        if model.has_labels and hasattr(model, "accuracy"):
            accuracies.append(model.accuracy(workers[0].weights, dataset.X, dataset.y))
        if epoch_fractions:
            central.append(float(np.mean(epoch_fractions)))
        if snapshot_gradients and last_grad is not None:
            snapshots.append((t - 1, last_grad.copy()))

    return RunResult(
        losses=losses,
        accuracies=accuracies,
        central_mass=central,
        grad_snapshots=snapshots,
        bits_total=cluster.ledger.total_bits(),
        modeled_comm_s=cluster.ledger.total_modeled_seconds(worker=0),
        wall_s=time.perf_counter() - started,
        encode_s=encode_s,
        weights=workers[0].weights.copy(),
        ledger=cluster.ledger,
    )
