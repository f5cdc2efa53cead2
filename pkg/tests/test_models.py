import numpy as np
import pytest

from a2sgd.models import LinearRegression, LogisticRegression, Mlp3, QuadraticBowl, build_model
from a2sgd.numkit import make_rng


def central_difference_gradient(model, w, X, y, h=1e-4):
    g = np.zeros_like(w)
    for i in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        g[i] = (model.loss(wp, X, y) - model.loss(wm, X, y)) / (2 * h)
    return g


def _max_rel_error(analytic, numeric):
    scale = np.maximum(np.abs(analytic), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def test_quadratic_gradient_equals_weights_on_zero_targets():
    model = QuadraticBowl(2)
    g = model.gradient(np.array([3.0, -1.0]), np.zeros((5, 2)))
    assert g.tolist() == [3.0, -1.0]
    assert model.loss(np.array([3.0, -1.0]), np.zeros((1, 2))) == 5.0


def test_logreg_zero_weights_balanced_batch_zero_bias_gradient():
    model = LogisticRegression(3)
    rng = make_rng(1, 0)
    X = rng.normal(size=(8, 3))
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.int64)
    g = model.gradient(np.zeros(4), X, y)
    assert g[-1] == 0.0


@pytest.mark.parametrize("kind,builder", [
    ("quadratic", lambda: QuadraticBowl(16)),
    ("linreg", lambda: LinearRegression(31)),
    ("logreg", lambda: LogisticRegression(24)),
    ("mlp3", lambda: Mlp3((16, 12, 12, 4))),
])
def test_analytic_gradient_matches_finite_differences(kind, builder):
    model = builder()
    assert model.n <= 500
    rng = make_rng(5, 0)
    w = model.init_weights(make_rng(6, 0))
    X = rng.normal(size=(32, model.dims[0] if kind == "mlp3" else (model.n if kind == "quadratic" else model.n - 1)))
    if kind == "quadratic":
        y = None
    elif kind == "linreg":
        y = rng.normal(size=32)
    elif kind == "logreg":
        y = rng.integers(0, 2, size=32).astype(np.int64)
    else:
        y = rng.integers(0, 4, size=32).astype(np.int64)
    analytic = model.gradient(w, X, y)
    numeric = central_difference_gradient(model, w, X, y)
    assert _max_rel_error(analytic, numeric) < 1e-5


def test_mlp_forward_deterministic():
    model = Mlp3((8, 6, 6, 3))
    w = model.init_weights(make_rng(2, 0))
    X = make_rng(3, 0).normal(size=(10, 8))
    y = make_rng(4, 0).integers(0, 3, size=10)
    assert model.loss(w, X, y) == model.loss(w, X, y)
    assert np.array_equal(model.gradient(w, X, y), model.gradient(w, X, y))


def test_overflow_raises_instead_of_nan():
    model = LinearRegression(2)
    w = np.array([1e200, 1e200, 0.0])
    X = np.full((4, 2), 1e200)
    y = np.zeros(4)
    with pytest.raises(FloatingPointError):
        with np.errstate(all="ignore"):
            model.gradient(w, X, y)


def test_mlp_parameter_count_default_geometry():
    model = Mlp3()
    assert model.dims == (64, 32, 32, 10)
    assert model.n == 64 * 32 + 32 + 32 * 32 + 32 + 32 * 10 + 10


def test_build_model_factory():
    assert build_model("quadratic", dim=4).n == 4
    assert build_model("linreg", dim=4).n == 5
    assert build_model("logreg", dim=4).n == 5
    assert build_model("mlp3").kind == "mlp3"
    with pytest.raises(ValueError):
        build_model("resnet")


def test_init_weights_seeded_and_bounded():
    model = Mlp3((16, 12, 12, 4))
    w1 = model.init_weights(make_rng(9, 0))
    w2 = model.init_weights(make_rng(9, 0))
    assert np.array_equal(w1, w2)
    assert float(np.max(np.abs(w1))) <= 1.0 / np.sqrt(12)
