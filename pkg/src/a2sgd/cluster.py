"""Deterministic in-process data-parallel cluster.

Collectives are simulated with plain function calls over one value per
worker: every worker's contribution arrives in rank order and reductions use
a fixed rank-ascending pairwise tree, so results are bit-identical across
runs regardless of thread scheduling. No sockets; the latency/bandwidth cost
model carries the networking claims.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .codecs import TwoMeans, WirePayload


@dataclass(frozen=True)
class CostModel:
    """alpha-beta transfer time: seconds = alpha + beta * bits."""

    alpha: float = 1e-5   # per-collective latency, seconds
    beta: float = 1e-11   # seconds per bit (~100 Gbps)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("cost model parameters must be >= 0")

    def transfer_seconds(self, bits: int) -> float:
        return self.alpha + self.beta * bits


@dataclass(frozen=True)
class LedgerRow:
    worker: int
    iteration: int
    algo: str
    bits_sent: int
    bits_received: int
    bits_honest: int
    modeled_time_s: float


class TrafficLedger:
    """Append-only record of per-worker, per-iteration synchronization traffic."""

    def __init__(self, cost: CostModel | None = None):
        self.cost = cost if cost is not None else CostModel()
        self.rows: list[LedgerRow] = []

    def record_traffic(self, worker: int, iteration: int, algo: str,
                       payload: WirePayload, bits_received: int | None = None) -> None:
        bits = payload.bit_cost
        self.rows.append(LedgerRow(
            worker=worker,
            iteration=iteration,
            algo=algo,
            bits_sent=bits,
            bits_received=bits if bits_received is None else bits_received,
            bits_honest=payload.bit_cost_honest,
            modeled_time_s=self.cost.transfer_seconds(bits),
        ))

    def total_bits(self, worker: int | None = None) -> int:
        return sum(r.bits_sent for r in self.rows if worker is None or r.worker == worker)

    def total_modeled_seconds(self, worker: int | None = None) -> float:
        return sum(r.modeled_time_s for r in self.rows if worker is None or r.worker == worker)

    def to_csv(self, path, honest: bool = False) -> None:
        """Canonical export; honest=True appends the index-inclusive bits column."""
        header = ["worker", "iter", "algo", "bits_sent", "modeled_time_s"]
        if honest:
            header.append("bits_honest")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in self.rows:
                row = [r.worker, r.iteration, r.algo, r.bits_sent, repr(r.modeled_time_s)]
                if honest:
                    row.append(r.bits_honest)
                writer.writerow(row)


def _pairwise_combine(items: list):
    """Rank-ascending pairwise reduction tree; bit-stable for floats."""
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            nxt.append(items[i] + items[i + 1])
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


class Cluster:
    """P simulated workers plus their collectives, traffic ledger, and cost model."""

    def __init__(self, num_workers: int, cost: CostModel | None = None):
        if num_workers < 1:
            raise ValueError(f"need at least one worker, got {num_workers}")
        self.num_workers = num_workers
        self.ledger = TrafficLedger(cost)
        self.collective_epoch = 0

    def _check_participants(self, values) -> None:
        if len(values) != self.num_workers:
            raise ValueError(f"collective needs {self.num_workers} participants, got {len(values)}")

    def allreduce_average(self, values):
        """Elementwise mean over workers, identical on every worker.

        Accepts one TwoMeans or one float64 vector per worker.
        """
        self._check_participants(values)
        self.collective_epoch += 1
        if isinstance(values[0], TwoMeans):
            if not all(isinstance(v, TwoMeans) for v in values):
                raise ValueError("all participants must contribute the same payload type")
            p = self.num_workers
            return TwoMeans(
                _pairwise_combine([v.mu_pos for v in values]) / p,
                _pairwise_combine([v.mu_neg for v in values]) / p,
            )
        arrays = [np.asarray(v, dtype=np.float64) for v in values]
        shape = arrays[0].shape
        if any(a.shape != shape for a in arrays):
            raise ValueError("allreduce participants must have identical shapes")
        return _pairwise_combine(arrays) / self.num_workers

    def allgather(self, payloads: list[WirePayload]) -> list[WirePayload]:
        """Every worker observes all payloads in rank order."""
        self._check_participants(payloads)
        self.collective_epoch += 1
        return list(payloads)

    def record_traffic(self, worker: int, iteration: int, algo: str,
                       payload: WirePayload, bits_received: int | None = None) -> None:
        self.ledger.record_traffic(worker, iteration, algo, payload, bits_received)


def reconstruct_average(payloads: list[WirePayload], n: int) -> np.ndarray:
    """Averaged dense gradient from allgathered payloads, zero-filling unselected indices.

    Overlapping indices accumulate; the result is the dense mean over workers
    of each worker's decoded (scatter-into-zeros) vector.
    """
    total = np.zeros(n, dtype=np.float64)
    for p in payloads:
        if p.indices is None:
            if p.scalars.size != n:
                raise ValueError(f"dense payload length {p.scalars.size} != n={n}")
            total += p.scalars
        else:
            np.add.at(total, p.indices, p.scalars)
    return total / len(payloads)


def scaling_efficiency(throughput: float, dense_two_worker: float) -> float:
    """Throughput normalized by dense SGD's two-worker throughput."""
    if dense_two_worker <= 0:
        raise ValueError("dense two-worker baseline throughput must be > 0")
    return throughput / dense_two_worker
