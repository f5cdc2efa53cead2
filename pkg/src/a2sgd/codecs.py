"""Gradient synchronization codecs.

Five strategies behind one shape of interface: what a worker extracts from
its gradient, what goes on the wire, and how the post-collective gradient is
rebuilt. Bit costs follow the accounting model (32-bit gradients on the
wire), while all arithmetic stays in float64.

Codec tags: "dense", "a2sgd", "topk", "gaussiank", "qsgd".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .numkit import as_gradient

CODEC_KINDS = ("dense", "a2sgd", "topk", "gaussiank", "qsgd")

DEFAULT_K_RATIO = 0.001
DEFAULT_QSGD_LEVEL = 4


@dataclass(frozen=True)
class TwoMeans:
    """Absolute means of the two sign classes; the entire two-mean wire payload."""

    mu_pos: float
    mu_neg: float

    def __post_init__(self):
        if not (np.isfinite(self.mu_pos) and np.isfinite(self.mu_neg)):
            raise ValueError("class means must be finite")
        if self.mu_pos < 0 or self.mu_neg < 0:
            raise ValueError("class means are absolute values and must be >= 0")


@dataclass(frozen=True)
class SignMask:
    """Sign classes of a gradient: pos[i] is True iff v[i] >= 0 (zeros count as positive)."""

    pos: np.ndarray

    @property
    def neg(self) -> np.ndarray:
        return ~self.pos

    def __len__(self) -> int:
        return self.pos.size


@dataclass
class WirePayload:
    """One worker's contribution to a collective, plus its modeled cost in bits.

    bit_cost follows the 32-bit accounting model (index bits excluded for the
    sparse codecs); bit_cost_honest additionally charges 32 bits per index,
    which is what a real transport would send.
    """

    kind: str
    scalars: np.ndarray
    indices: np.ndarray | None
    bit_cost: int
    bit_cost_honest: int


@dataclass
class CodecState:
    """Per-worker codec state: accumulated residual, RNG, and knobs.

    The residual carries error feedback for the sparse codecs. The two-mean
    codec stores its per-step error vector and mask here between encode and
    decode; QSGD is unbiased and leaves the residual at zero.
    """

    n: int
    k_ratio: float = DEFAULT_K_RATIO
    qsgd_level: int = DEFAULT_QSGD_LEVEL
    k_override: int | None = None
    rng: np.random.Generator | None = None
    residual: np.ndarray = field(default=None)  # type: ignore[assignment]
    last_mask: SignMask | None = None

    def __post_init__(self):
        if self.residual is None:
            self.residual = np.zeros(self.n, dtype=np.float64)

    def k(self) -> int:
        """Sparsifier budget: explicit override, else ceil(k_ratio * n), at least 1."""
        if self.k_override is not None:
            k = self.k_override
        else:
            k = max(1, math.ceil(self.k_ratio * self.n))
        if k > self.n:
            raise ValueError(f"k={k} exceeds gradient length n={self.n}")
        return k


def _as_vector(values) -> np.ndarray:
    """1-D float64 view without the elementwise finite scan (the two-mean
    reductions detect non-finite input from their sums instead)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"gradient must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ValueError("gradient must be nonempty")
    return v


@njit(cache=True)
def _class_sums(v, pos):
    """Single pass: sign mask plus total and positive-class sums/count."""
    total = 0.0
    total_pos = 0.0
    n_pos = 0
    for i in range(v.size):
        x = v[i]
        p = x >= 0.0
        pos[i] = p
        total += x
        if p:
            total_pos += x
            n_pos += 1
    return total, total_pos, n_pos


@njit(cache=True)
def _write_errors(v, pos, mu_pos, mu_neg, eps):
    """eps = v - (pos * mu_pos - neg * mu_neg), one rounding per element."""
    for i in range(v.size):
        if pos[i]:
            eps[i] = v[i] - mu_pos
        else:
            eps[i] = v[i] + mu_neg


def _class_means(v: np.ndarray) -> tuple[float, float, np.ndarray]:
    pos = np.empty(v.size, dtype=np.bool_)
    total, total_pos, n_pos = _class_sums(v, pos)
    if not (np.isfinite(total) and np.isfinite(total_pos)):
        raise ValueError("gradient contains NaN or Inf")
    n_neg = v.size - n_pos
    mu_pos = total_pos / n_pos if n_pos else 0.0
    mu_neg = -(total - total_pos) / n_neg if n_neg else 0.0
    return mu_pos, mu_neg, pos


def enc(values) -> tuple[TwoMeans, SignMask, np.ndarray]:
    """Replace every element by its sign-class absolute mean.

    Returns the two means, the sign mask, and the reconstruction
    pos * mu_pos - neg * mu_neg. An empty sign class gets mean 0, which keeps
    the reconstruction total on one-signed inputs.
    """
    v = _as_vector(values)
    mu_pos, mu_neg, pos = _class_means(v)
    recon = np.where(pos, mu_pos, -mu_neg)
    return TwoMeans(mu_pos, mu_neg), SignMask(pos), recon


def a2sgd_encode(values, state: CodecState) -> tuple[WirePayload, np.ndarray, SignMask]:
    """Two-mean encode: payload is exactly two scalars; the error vector stays local.

    The error vector is written into the state's residual buffer (reused
    across encodes, so a steady-state encode allocates only the sign mask);
    it is valid until the next encode on the same state.
    """
    v = _as_vector(values)
    if v.size != state.n:
        raise ValueError(f"gradient length {v.size} != codec state n={state.n}")
    mu_pos, mu_neg, pos = _class_means(v)
    eps = state.residual
    _write_errors(v, pos, mu_pos, mu_neg, eps)
    mask = SignMask(pos)
    state.last_mask = mask
    payload = WirePayload(
        kind="a2sgd",
        scalars=np.array([mu_pos, mu_neg]),
        indices=None,
        bit_cost=64,
        bit_cost_honest=64,
    )
    return payload, eps, mask


def a2sgd_decode(global_means: TwoMeans, mask: SignMask, eps: np.ndarray) -> np.ndarray:
    """Rebuild the worker's gradient: error vector plus the globally averaged means."""
    if len(mask) != eps.size:
        raise ValueError(f"mask length {len(mask)} != error vector length {eps.size}")
    return eps + np.where(mask.pos, global_means.mu_pos, -global_means.mu_neg)


def topk_encode(values, state: CodecState) -> tuple[WirePayload, np.ndarray]:
    """Keep the k largest-magnitude elements of gradient + residual; the rest feed back.

    Ties break toward the lowest index so repeated runs select identically.
    """
    v = as_gradient(values)
    k = state.k()
    effective = v + state.residual
    # Stable sort on descending magnitude keeps equal magnitudes in index order.
    order = np.argsort(-np.abs(effective), kind="stable")[:k]
    selected = np.sort(order)
    payload = WirePayload(
        kind="topk",
        scalars=effective[selected].copy(),
        indices=selected,
        bit_cost=32 * k,
        bit_cost_honest=64 * k,
    )
    residual = effective.copy()
    residual[selected] = 0.0
    state.residual = residual
    return payload, state.residual


# Coefficients of Acklam's rational approximation to the probit function.
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_P_LOW = 0.02425


def inverse_normal_cdf(p: float) -> float:
    """Standard normal inverse CDF, rational approximation (|error| < 1e-8)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    if p < _ICDF_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if p > 1.0 - _ICDF_P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)


def gaussian_threshold(values, ratio: float) -> float:
    """Magnitude threshold keeping roughly `ratio` of the elements.

    Models the elements as Normal(0, sigma^2) with sigma estimated from the
    vector, so t = sigma_hat * icdf(1 - ratio/2). A degenerate constant vector
    estimates sigma_hat = 0 and the threshold selects everything nonzero.
    """
    v = as_gradient(values)
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    sigma_hat = float(np.std(v))
    if sigma_hat == 0.0:
        return 0.0
    return sigma_hat * inverse_normal_cdf(1.0 - ratio / 2.0)


def gaussian_k_encode(values, state: CodecState) -> tuple[WirePayload, np.ndarray]:
    """Select all elements of gradient + residual above the estimated threshold."""
    v = as_gradient(values)
    effective = v + state.residual
    t = gaussian_threshold(effective, state.k_ratio)
    selected = np.flatnonzero(np.abs(effective) > t)
    payload = WirePayload(
        kind="gaussiank",
        scalars=effective[selected].copy(),
        indices=selected,
        bit_cost=32 * selected.size,
        bit_cost_honest=64 * selected.size,
    )
    residual = effective.copy()
    residual[selected] = 0.0
    state.residual = residual
    return payload, state.residual


def qsgd_encode(values, state: CodecState) -> tuple[WirePayload, np.ndarray]:
    """Unbiased stochastic quantization onto s uniform levels scaled by the 2-norm.

    Each element becomes norm * sign(v_i) * xi_i with xi_i in {0, 1/s, ..., 1}
    rounded stochastically so the encode is unbiased. No error feedback: the
    residual stays at zero.
    """
    v = as_gradient(values)
    s = state.qsgd_level
    if s < 1:
        raise ValueError(f"quantization level must be >= 1, got {s}")
    if state.rng is None:
        raise ValueError("qsgd_encode requires CodecState.rng for stochastic rounding")
    norm = float(np.sqrt(np.sum(np.square(v))))
    if norm == 0.0:
        quantized = np.zeros_like(v)
    else:
        scaled = np.abs(v) * (s / norm)
        level = np.floor(scaled)
        frac = scaled - level
        level += state.rng.random(v.size) < frac
        quantized = norm * np.sign(v) * (level / s)
    payload = WirePayload(
        kind="qsgd",
        scalars=quantized,
        indices=None,
        bit_cost=traffic_bits("qsgd", v.size),
        bit_cost_honest=traffic_bits("qsgd", v.size),
    )
    return payload, state.residual


def dense_encode(values) -> WirePayload:
    """Uncompressed baseline: the full vector at 32 bits per element."""
    v = as_gradient(values)
    return WirePayload(
        kind="dense",
        scalars=v.copy(),
        indices=None,
        bit_cost=32 * v.size,
        bit_cost_honest=32 * v.size,
    )


def traffic_bits(kind: str, n: int, k: int | None = None) -> int:
    """Per-iteration synchronization bits per worker under the accounting model."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if kind == "dense":
        return 32 * n
    if kind == "a2sgd":
        return 64
    if kind in ("topk", "gaussiank"):
        if k is None:
            raise ValueError(f"{kind} traffic needs the selected count k")
        if k > n:
            raise ValueError(f"k={k} exceeds n={n}")
        return 32 * k
    if kind == "qsgd":
        # ceil(2.8 n) + 32 in exact integer arithmetic: 2.8 n = 14 n / 5.
        return -(-14 * n // 5) + 32
    raise ValueError(f"unknown codec kind {kind!r}")
