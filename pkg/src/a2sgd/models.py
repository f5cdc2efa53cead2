"""Desk-scale models with hand-written analytic gradients.

Every model works on a flat float64 weight vector so the codecs and
collectives see one contiguous gradient. Forward/backward are deterministic
given (weights, batch); overflow raises instead of propagating NaN.
"""

from __future__ import annotations

import math

import numpy as np


def _check_finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{what} overflowed (non-finite values)")
    return arr


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class QuadraticBowl:
    """Mean squared distance to the batch points: loss = 0.5 * mean_i ||w - x_i||^2.

    The gradient is w - mean(batch); with zero targets this is exactly w and
    the unique minimum of the full dataset sits at the data mean.
    """

    kind = "quadratic"
    has_labels = False

    def __init__(self, dim: int):
        self.n = dim

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        return uniform_fan_in(rng, self.n, self.n)

    def loss(self, w: np.ndarray, X: np.ndarray, y=None) -> float:
        diff = w[None, :] - X
        return _check_finite(0.5 * float(np.mean(np.sum(diff * diff, axis=1))), "loss")

    def gradient(self, w: np.ndarray, X: np.ndarray, y=None) -> np.ndarray:
        return _check_finite(w - np.mean(X, axis=0), "gradient")


class LinearRegression:
    """Least squares with intercept; weights are [coef..., intercept]."""

    kind = "linreg"
    has_labels = True

    def __init__(self, dim: int):
        self.dim = dim
        self.n = dim + 1

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        return uniform_fan_in(rng, self.n, self.dim)

    def _predict(self, w, X):
        return X @ w[:-1] + w[-1]

    def loss(self, w, X, y) -> float:
        r = self._predict(w, X) - y
        return _check_finite(0.5 * float(np.mean(r * r)), "loss")

    def gradient(self, w, X, y) -> np.ndarray:
        r = self._predict(w, X) - y
        g = np.empty(self.n)
        g[:-1] = X.T @ r / X.shape[0]
        g[-1] = np.mean(r)
        return _check_finite(g, "gradient")


class LogisticRegression:
    """Binary logistic regression with intercept; labels in {0, 1}."""

    kind = "logreg"
    has_labels = True

    def __init__(self, dim: int):
        self.dim = dim
        self.n = dim + 1

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        return uniform_fan_in(rng, self.n, self.dim)

    def _logits(self, w, X):
        return X @ w[:-1] + w[-1]

    def loss(self, w, X, y) -> float:
        z = self._logits(w, X)
        # log(1 + exp(-|z|)) + max(z, 0) - z*y is the stable cross-entropy.
        ce = np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * y
        return _check_finite(float(np.mean(ce)), "loss")

    def gradient(self, w, X, y) -> np.ndarray:
        z = self._logits(w, X)
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        r = p - y
        g = np.empty(self.n)
        g[:-1] = X.T @ r / X.shape[0]
        g[-1] = np.mean(r)
        return _check_finite(g, "gradient")

    def predict(self, w, X) -> np.ndarray:
        return (self._logits(w, X) >= 0.0).astype(np.int64)

    def accuracy(self, w, X, y) -> float:
        return float(np.mean(self.predict(w, X) == y))


class Mlp3:
    """Three fully connected layers (two hidden, ReLU) with softmax cross-entropy.

    Weight layout is the concatenation of (W1, b1, W2, b2, W3, b3); the
    default 64-32-32-10 geometry has ~3.5k parameters.
    """

    kind = "mlp3"
    has_labels = True

    def __init__(self, dims=(64, 32, 32, 10)):
        if len(dims) != 4:
            raise ValueError("mlp3 needs (input, hidden1, hidden2, output) widths")
        self.dims = tuple(int(d) for d in dims)
        self.shapes = []
        for d_in, d_out in zip(self.dims[:-1], self.dims[1:]):
            self.shapes.append((d_in, d_out))
            self.shapes.append((d_out,))
        self.n = sum(int(np.prod(s)) for s in self.shapes)

    def unpack(self, w: np.ndarray):
        params, offset = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            params.append(w[offset:offset + size].reshape(shape))
            offset += size
        return params

    def init_weights(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for shape in self.shapes:
            fan_in = shape[0] if len(shape) == 2 else self.dims[0]
            if len(shape) == 1:
                parts.append(np.zeros(shape))
            else:
                parts.append(uniform_fan_in(rng, shape, fan_in).ravel())
        return np.concatenate(parts)

    def _forward(self, w, X):
        w1, b1, w2, b2, w3, b3 = self.unpack(w)
        h1 = np.maximum(X @ w1 + b1, 0.0)
        h2 = np.maximum(h1 @ w2 + b2, 0.0)
        logits = h2 @ w3 + b3
        logits = logits - np.max(logits, axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / np.sum(exp, axis=1, keepdims=True)
        return h1, h2, probs

    def loss(self, w, X, y) -> float:
        _, _, probs = self._forward(w, X)
        picked = probs[np.arange(X.shape[0]), y]
        return _check_finite(float(-np.mean(np.log(np.maximum(picked, 1e-300)))), "loss")

    def gradient(self, w, X, y) -> np.ndarray:
        w1, b1, w2, b2, w3, b3 = self.unpack(w)
        m = X.shape[0]
        h1, h2, probs = self._forward(w, X)
        delta3 = probs.copy()
        delta3[np.arange(m), y] -= 1.0
        delta3 /= m
        g_w3 = h2.T @ delta3
        g_b3 = np.sum(delta3, axis=0)
        delta2 = (delta3 @ w3.T) * (h2 > 0.0)
        g_w2 = h1.T @ delta2
        g_b2 = np.sum(delta2, axis=0)
        delta1 = (delta2 @ w2.T) * (h1 > 0.0)
        g_w1 = X.T @ delta1
        g_b1 = np.sum(delta1, axis=0)
        g = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2, g_w3.ravel(), g_b3])
        return _check_finite(g, "gradient")

    def predict(self, w, X) -> np.ndarray:
        _, _, probs = self._forward(w, X)
        return np.argmax(probs, axis=1)

    def accuracy(self, w, X, y) -> float:
        return float(np.mean(self.predict(w, X) == y))


def build_model(kind: str, dim: int | None = None, widths=None):
    """Model factory keyed by the CLI model names."""
    if kind == "quadratic":
        return QuadraticBowl(dim if dim is not None else 8)
    if kind == "linreg":
        return LinearRegression(dim if dim is not None else 16)
    if kind == "logreg":
        return LogisticRegression(dim if dim is not None else 16)
    if kind == "mlp3":
        return Mlp3(widths if widths is not None else (64, 32, 32, 10))
    raise ValueError(f"unknown model kind {kind!r}")
