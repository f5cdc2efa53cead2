"""Dataset loading, synthesis, and deterministic mini-batch sharding."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .numkit import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix plus optional labels and generator-provided metadata."""

    X: np.ndarray
    y: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]


def shard_indices(batch_indices: np.ndarray, rank: int, num_workers: int) -> np.ndarray:
    """Worker `rank`'s strided slice of a mini-batch.

    Shards are disjoint and cover the batch; when the batch does not divide
    evenly the first (len % num_workers) workers take one extra sample.
    """
    if not 0 <= rank < num_workers:
        raise ValueError(f"rank {rank} out of range for {num_workers} workers")
    return batch_indices[rank::num_workers]


def iterate_batches(n_samples: int, batch_size: int, epoch: int, seed: int, shuffle: bool = True):
    """Yield index arrays for one epoch; the permutation is fixed by (seed, epoch)."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        order = make_rng(seed, stream=10_000 + epoch).permutation(n_samples)
    else:
        order = np.arange(n_samples)
    for start in range(0, n_samples, batch_size):
        yield order[start:start + batch_size]


def _read_be_u32(fh, path, what):
    data = fh.read(4)
    if len(data) != 4:
        raise ValueError(f"{path}: truncated IDX file while reading {what}")
    return struct.unpack(">I", data)[0]


def read_idx(path) -> np.ndarray:
    """Parse one big-endian IDX file of unsigned bytes (images or labels)."""
    with open(path, "rb") as fh:
        magic = _read_be_u32(fh, path, "magic")
        if magic == IDX_IMAGES_MAGIC:
            count = _read_be_u32(fh, path, "item count")
            rows = _read_be_u32(fh, path, "row count")
            cols = _read_be_u32(fh, path, "column count")
            body = fh.read(count * rows * cols)
            if len(body) != count * rows * cols:
                raise ValueError(f"{path}: truncated IDX image data "
                                 f"(expected {count * rows * cols} bytes, got {len(body)})")
            return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)
        if magic == IDX_LABELS_MAGIC:
            count = _read_be_u32(fh, path, "item count")
            body = fh.read(count)
            if len(body) != count:
                raise ValueError(f"{path}: truncated IDX label data "
                                 f"(expected {count} bytes, got {len(body)})")
            return np.frombuffer(body, dtype=np.uint8)
        raise ValueError(f"{path}: bad IDX magic bytes 0x{magic:08x} "
                         f"(expected 0x{IDX_IMAGES_MAGIC:08x} or 0x{IDX_LABELS_MAGIC:08x})")


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair, scaling pixels to [0, 1] and flattening rows."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected an image tensor, found labels")
    if labels.ndim != 1:
        raise ValueError(f"{labels_path}: expected labels, found an image tensor")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"image/label count mismatch: {images.shape[0]} images "
                         f"vs {labels.shape[0]} labels")
    count, rows, cols = images.shape
    X = images.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(X=X, y=labels.astype(np.int64), meta={"image_shape": (rows, cols)})


def make_synthetic(kind: str, n_samples: int, dim: int, seed: int, *,
                   centers: int = 10, center_scale: float = 2.0, spread: float = 1.0,
                   noise: float = 0.0) -> Dataset:
    """Deterministic synthetic data with known ground truth.

    "blobs": gaussian clusters; sample i belongs to cluster i mod centers, so
    strided sharding with num_workers == centers gives each worker its own
    cluster. "linear": y = X w_true + b_true + noise with w_true in meta.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = make_rng(seed, stream=0)
    if kind == "blobs":
        means = rng.normal(0.0, center_scale, size=(centers, dim))
        labels = np.arange(n_samples, dtype=np.int64) % centers
        X = means[labels] + rng.normal(0.0, spread, size=(n_samples, dim))
        return Dataset(X=X, y=labels, meta={"centers": means})
    if kind == "linear":
        w_true = rng.normal(0.0, 1.0, size=dim)
        b_true = float(rng.normal(0.0, 1.0))
        X = rng.normal(0.0, 1.0, size=(n_samples, dim))
        y = X @ w_true + b_true
        if noise > 0:
            y = y + rng.normal(0.0, noise, size=n_samples)
        return Dataset(X=X, y=y, meta={"w_true": w_true, "b_true": b_true})
    raise ValueError(f"unknown synthetic kind {kind!r}")
