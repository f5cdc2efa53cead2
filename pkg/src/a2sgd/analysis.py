"""Executable diagnostics for the two-mean averaging statistics.

Half-normal identities, the net gain a worker's gradient receives from
globally averaged means, the moment-change ratio and its idealized 1/P law,
the non-convex bound terms, and gradient histograms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .codecs import SignMask, TwoMeans, enc
from .numkit import l2_norm_sq, make_rng, sample_normal


def half_normal_theory(sigma: float) -> tuple[float, float]:
    """Absolute mean and variance of |X| for X ~ Normal(0, sigma^2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return sigma * math.sqrt(2.0 / math.pi), sigma * sigma * (1.0 - 2.0 / math.pi)


def pooled_mean_variance(sigma_half_sq: float, num_workers: int) -> float:
    """Variance of the average of num_workers equal-variance class means."""
    if num_workers < 1:
        raise ValueError(f"num_workers must be >= 1, got {num_workers}")
    return sigma_half_sq / num_workers


@dataclass(frozen=True)
class NetGain:
    """Elementwise shift a worker's gradient receives from global mean averaging."""

    vector: np.ndarray
    norm_sq: float


def net_gain(local: tuple[TwoMeans, SignMask], global_means: TwoMeans) -> NetGain:
    """pos * (global_pos - local_pos) - neg * (global_neg - local_neg)."""
    local_means, mask = local
    shift_pos = global_means.mu_pos - local_means.mu_pos
    shift_neg = global_means.mu_neg - local_means.mu_neg
    vector = np.where(mask.pos, shift_pos, -shift_neg)
    return NetGain(vector=vector, norm_sq=l2_norm_sq(vector) if vector.size else 0.0)


def moment_change_check(num_workers: int, n: int, trials: int, seed: int) -> tuple[float, float]:
    """Measured mean of ||net gain||^2 / ||g||^2 for i.i.d. standard-normal worker
    gradients, alongside the idealized ratio (pi - 2) / (pi * P).

    The idealized value treats each worker's class mean as carrying the full
    half-normal variance. For an i.i.d. gradient of length n the class means
    concentrate (their variance is ~(1 - 2/pi)/(n/2)), so the measured ratio
    follows 2*(1 - 2/pi)*(P - 1)/(P*n) instead and the two agree only at P=1.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    theory = (math.pi - 2.0) / (math.pi * num_workers)
    ratios = []
    for trial in range(trials):
        rng = make_rng(seed, stream=trial)
        encoded = []
        norms = []
        for _ in range(num_workers):
            g = sample_normal(rng, n)
            means, mask, _ = enc(g)
            encoded.append((means, mask))
            norms.append(l2_norm_sq(g))
        global_means = TwoMeans(
            float(np.mean([m.mu_pos for m, _ in encoded])),
            float(np.mean([m.mu_neg for m, _ in encoded])),
        )
        for (means, mask), norm_sq in zip(encoded, norms):
            ratios.append(net_gain((means, mask), global_means).norm_sq / norm_sq)
    return float(np.mean(ratios)), theory


def mechanism_moment_ratio(num_workers: int, n: int) -> float:
    """Concentration-aware prediction of the measured moment-change ratio."""
    v = 1.0 - 2.0 / math.pi
    return 2.0 * v * (num_workers - 1) / (num_workers * n)


@dataclass(frozen=True)
class DeltaReport:
    """Moment-change parameter: idealized 1 - (pi-2)/(pi P) vs measured value."""

    delta_theory: float
    delta_empirical: float
    num_workers: int


def delta_report(g, g_prime, num_workers: int) -> DeltaReport:
    """delta with ||g - g'||^2 = (1 - delta) ||g||^2, plus the idealized value."""
    g = np.asarray(g, dtype=np.float64)
    g_prime = np.asarray(g_prime, dtype=np.float64)
    if g.shape != g_prime.shape:
        raise ValueError("g and g' must have equal lengths")
    norm_sq = l2_norm_sq(g)
    if norm_sq == 0.0:
        raise ValueError("delta is undefined for a zero gradient")
    theory = 1.0 - (math.pi - 2.0) / (math.pi * num_workers)
    empirical = 1.0 - l2_norm_sq(g - g_prime) / norm_sq
    return DeltaReport(delta_theory=theory, delta_empirical=empirical, num_workers=num_workers)


def theorem_bound_terms(f0: float, eta: float, smoothness: float, moment_bound_sq: float,
                        total_steps: int) -> tuple[float, float]:
    """The two terms 2 f0 / (eta (T+1)) and eta L phi^2 / 2 of the non-convex
    stationarity bound. Diagnostic only; the bound's remainder is not modeled."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    term1 = 2.0 * f0 / (eta * (total_steps + 1))
    term2 = eta * smoothness * moment_bound_sq / 2.0
    return term1, term2


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin counts of a gradient vector at one training checkpoint."""

    edges: np.ndarray
    counts: np.ndarray
    tag: int | str

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))


def histogram(g, bins: int = 101, tag: int | str = 0) -> Histogram:
    """Counts over `bins` uniform bins spanning [min(g), max(g)].

    A constant vector widens the span by +-0.5 so all mass lands in a single
    bin rather than a degenerate zero-width range.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.size == 0:
        raise ValueError("histogram needs a nonempty vector")
    lo, hi = float(np.min(g)), float(np.max(g))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(g, bins=bins, range=(lo, hi))
    return Histogram(edges=edges, counts=counts, tag=tag)


def histogram_to_csv(hist: Histogram, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(count)])
