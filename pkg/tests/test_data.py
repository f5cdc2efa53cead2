import struct

import numpy as np
import pytest

from a2sgd.data import (
    Dataset,
    iterate_batches,
    load_idx,
    make_synthetic,
    read_idx,
    shard_indices,
)
from a2sgd.models import LogisticRegression
from a2sgd.numkit import make_rng


def _write_idx_images(path, images):
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, count, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def _write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def test_idx_round_trip(tmp_path):
    rng = make_rng(0, 0)
    images = rng.integers(0, 256, size=(4, 28, 28)).astype(np.uint8)
    labels = np.array([3, 1, 4, 1], dtype=np.uint8)
    img_path, lab_path = tmp_path / "img.idx", tmp_path / "lab.idx"
    _write_idx_images(img_path, images)
    _write_idx_labels(lab_path, labels)

    data = load_idx(img_path, lab_path)
    assert len(data) == 4
    assert data.meta["image_shape"] == (28, 28)
    assert data.X.shape == (4, 784)
    assert data.X.min() >= 0.0 and data.X.max() <= 1.0
    assert np.array_equal(data.X[0], images[0].reshape(-1) / 255.0)
    assert data.y.tolist() == [3, 1, 4, 1]


def test_idx_bad_magic_names_bytes(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(struct.pack(">I", 0xDEADBEEF) + b"\0" * 16)
    with pytest.raises(ValueError, match="0xdeadbeef"):
        read_idx(path)


def test_idx_truncated_file(tmp_path):
    path = tmp_path / "trunc.idx"
    path.write_bytes(b"")
    with pytest.raises(ValueError, match="truncated"):
        read_idx(path)

    short = tmp_path / "short.idx"
    short.write_bytes(struct.pack(">IIII", 0x00000803, 10, 28, 28) + b"\0" * 100)
    with pytest.raises(ValueError, match="truncated"):
        read_idx(short)


def test_idx_count_mismatch(tmp_path):
    img_path, lab_path = tmp_path / "img.idx", tmp_path / "lab.idx"
    _write_idx_images(img_path, np.zeros((4, 2, 2), dtype=np.uint8))
    _write_idx_labels(lab_path, np.zeros(5, dtype=np.uint8))
    with pytest.raises(ValueError, match="mismatch"):
        load_idx(img_path, lab_path)


def test_idx_swapped_arguments(tmp_path):
    img_path, lab_path = tmp_path / "img.idx", tmp_path / "lab.idx"
    _write_idx_images(img_path, np.zeros((2, 2, 2), dtype=np.uint8))
    _write_idx_labels(lab_path, np.zeros(2, dtype=np.uint8))
    with pytest.raises(ValueError):
        load_idx(lab_path, img_path)


def test_make_synthetic_linear_exact_recovery():
    data = make_synthetic("linear", 256, 8, seed=3, noise=0.0)
    A = np.hstack([data.X, np.ones((256, 1))])
    coef, *_ = np.linalg.lstsq(A, data.y, rcond=None)
    assert np.allclose(coef[:-1], data.meta["w_true"], atol=1e-10)
    assert coef[-1] == pytest.approx(data.meta["b_true"], abs=1e-10)


def test_make_synthetic_blobs_separable_for_logreg():
    data = make_synthetic("blobs", 400, 8, seed=5, centers=2, center_scale=3.0, spread=0.5)
    model = LogisticRegression(8)
    w = np.zeros(model.n)
    for _ in range(500):
        w -= 0.5 * model.gradient(w, data.X, data.y)
    assert model.accuracy(w, data.X, data.y) == 1.0


def test_make_synthetic_deterministic():
    a = make_synthetic("blobs", 100, 4, seed=7)
    b = make_synthetic("blobs", 100, 4, seed=7)
    c = make_synthetic("blobs", 100, 4, seed=8)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_make_synthetic_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_synthetic("spiral", 10, 2, 0)
    with pytest.raises(ValueError):
        make_synthetic("blobs", 10, 0, 0)


def test_blob_cluster_assignment_is_strided():
    data = make_synthetic("blobs", 40, 2, seed=1, centers=4)
    assert data.y.tolist() == [i % 4 for i in range(40)]


def test_shard_indices_disjoint_cover_with_extras_first():
    batch = np.arange(10)
    shards = [shard_indices(batch, p, 4) for p in range(4)]
    assert [len(s) for s in shards] == [3, 3, 2, 2]
    combined = np.sort(np.concatenate(shards))
    assert np.array_equal(combined, batch)
    with pytest.raises(ValueError):
        shard_indices(batch, 4, 4)


def test_iterate_batches_deterministic_and_covering():
    seen1 = list(iterate_batches(100, 32, epoch=0, seed=9))
    seen2 = list(iterate_batches(100, 32, epoch=0, seed=9))
    other = list(iterate_batches(100, 32, epoch=1, seed=9))
    assert all(np.array_equal(a, b) for a, b in zip(seen1, seen2))
    assert not all(np.array_equal(a, b) for a, b in zip(seen1, other))
    assert np.array_equal(np.sort(np.concatenate(seen1)), np.arange(100))
    assert [len(b) for b in seen1] == [32, 32, 32, 4]

    plain = list(iterate_batches(10, 4, epoch=0, seed=0, shuffle=False))
    assert plain[0].tolist() == [0, 1, 2, 3]


def test_dataset_len():
    data = Dataset(X=np.zeros((7, 2)))
    assert len(data) == 7
