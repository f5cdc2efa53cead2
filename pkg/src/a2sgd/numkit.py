"""Dense vector arithmetic, seeded sampling, and descriptive statistics.

Everything here is float64 and single-threaded with fixed summation order
(numpy's pairwise reduction), so results are bit-stable across runs and
thread schedules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent deterministic generator for (seed, stream).

    Identical (seed, stream) pairs yield identical sample sequences; distinct
    streams of the same seed are statistically independent.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def as_gradient(values) -> np.ndarray:
    """Validate and return a 1-D float64 gradient vector (finite, nonempty)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"gradient must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ValueError("gradient must be nonempty")
    if not np.all(np.isfinite(v)):
        raise ValueError("gradient contains NaN or Inf")
    return v


def sample_normal(rng: np.random.Generator, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
    """n i.i.d. Normal(mu, sigma^2) samples; deterministic given the generator state."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if sigma < 0 or not np.isfinite(sigma):
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    return rng.normal(loc=mu, scale=sigma, size=n)


def l2_norm_sq(values) -> float:
    """Sum of squares with numpy's fixed pairwise summation order."""
    v = as_gradient(values)
    return float(np.sum(np.square(v)))


@dataclass(frozen=True)
class SummaryStats:
    """Population mean/variance and the second moment (sum of squares)."""

    mean: float
    variance: float
    second_moment: float
    count: int


def summarize(values) -> SummaryStats:
    """Single descriptive pass: population statistics of a gradient vector."""
    v = as_gradient(values)
    mean = float(np.mean(v))
    # Two-pass population variance; avoids E[x^2] - E[x]^2 cancellation.
    variance = float(np.mean(np.square(v - mean)))
    return SummaryStats(mean=mean, variance=variance, second_moment=l2_norm_sq(v), count=v.size)
