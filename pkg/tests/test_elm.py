import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvelm import elm
from mvelm.elm import Activation, HiddenLayer, ElmModel
from mvelm.numerics import SeededRng, ShapeError

from oracles import hidden_loop, ridge_gd, ridge_obj


def layer(d, nh, seed=0, kind="sigmoid"):
    return elm.init_hidden(d, nh, Activation(kind), SeededRng(seed))


def test_init_hidden_deterministic():
    a, b = layer(44, 100, 7), layer(44, 100, 7)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.biases, b.biases)


def test_init_hidden_shapes_and_ranges():
    lay = layer(11, 50)
    assert lay.weights.shape == (50, 11) and lay.biases.shape == (50,)
    assert lay.weights.min() >= -1 and lay.weights.max() <= 1
    assert lay.biases.min() >= 0 and lay.biases.max() <= 1
    assert layer(3, 1).weights.shape == (1, 3)


def test_init_hidden_rejects_zero():
    with pytest.raises(ValueError):
        layer(0, 5)


def test_sigmoid_at_zero_preactivation():
    lay = HiddenLayer(np.array([[1.0, -1.0]]), np.array([0.0]))
    assert elm.hidden_output(lay, [[2.0, 2.0]])[0, 0] == 0.5


def test_rbf_at_centre():
    lay = HiddenLayer(np.array([[0.3, 0.7]]), np.zeros(1), Activation("rbf"))
    assert elm.hidden_output(lay, [[0.3, 0.7]])[0, 0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kind", ["sigmoid", "rbf"])
def test_hidden_output_matches_loop(kind, rng):
    x = rng.normal(size=(3, 2))
    lay = layer(2, 4, seed=11, kind=kind)
    expected = hidden_loop(lay.weights, lay.biases, x, kind)
    np.testing.assert_allclose(elm.hidden_output(lay, x), expected, rtol=1e-12, atol=1e-15)


def test_hidden_output_no_overflow():
    lay = HiddenLayer(np.array([[1.0]]), np.array([0.0]))
    with np.errstate(all="raise"):
        h = elm.hidden_output(lay, [[-1e4], [1e4]])
    np.testing.assert_array_equal(h.ravel(), [0.0, 1.0])


def test_hidden_output_dim_mismatch():
    with pytest.raises(ShapeError):
        elm.hidden_output(layer(3, 2), np.ones((2, 4)))


def test_train_batch_identity_features(rng):
    t = rng.normal(size=(6, 2))
    np.testing.assert_allclose(elm.train_batch(np.eye(6), t, 1e12), t, atol=1e-9)


def test_train_batch_matches_gradient_descent(rng):
    h = rng.random((20, 5))
    t = np.sign(rng.normal(size=(20, 2)))
    beta = elm.train_batch(h, t, 1.0)
    ref = ridge_gd(h, t, 1.0, steps=20000)
    f, f_ref = ridge_obj(beta, h, t, 1.0), ridge_obj(ref, h, t, 1.0)
    assert abs(f - f_ref) / f_ref < 1e-4
    assert f <= f_ref + 1e-12


def test_train_batch_tiny_c_gives_zero(rng):
    beta = elm.train_batch(rng.random((10, 4)), rng.normal(size=(10, 2)), 1e-12)
    assert np.abs(beta).max() < 1e-10


def test_train_batch_rejects_bad_c(rng):
    with pytest.raises(ValueError):
        elm.train_batch(np.ones((3, 2)), np.ones((3, 1)), 0.0)


def test_primal_equals_dual(rng):
    h = rng.random((15, 30))
    t = rng.normal(size=(15, 3))
    np.testing.assert_allclose(elm.train_batch(h, t, 2.0), elm.train_batch_dual(h, t, 2.0),
                               rtol=1e-8, atol=1e-10)


def test_weighted_all_ones_equals_batch(rng):
    h, t = rng.random((12, 4)), rng.normal(size=(12, 2))
    np.testing.assert_array_equal(elm.train_weighted(h, t, 1.5, np.ones(12)),
                                  elm.train_batch(h, t, 1.5))


def test_weighted_zero_row_is_deletion(rng):
    h, t = rng.random((12, 4)), rng.normal(size=(12, 2))
    w = np.ones(12)
    w[5] = 0.0
    keep = np.arange(12) != 5
    np.testing.assert_allclose(elm.train_weighted(h, t, 1.0, w),
                               elm.train_batch(h[keep], t[keep], 1.0), rtol=1e-12)


def test_weighted_scaling_identity(rng):
    h, t = rng.random((12, 4)), rng.normal(size=(12, 2))
    np.testing.assert_allclose(elm.train_weighted(h, t, 1.0, 2 * np.ones(12)),
                               elm.train_batch(h, t, 2.0), rtol=1e-12)


@pytest.mark.parametrize("w", [[-1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [np.inf, 1.0, 1.0]])
def test_weighted_rejects_bad_weights(w):
    with pytest.raises(ValueError):
        elm.train_weighted(np.ones((3, 2)), np.ones((3, 1)), 1.0, w)


def test_fit_interpolates_training_set(rng):
    x = rng.normal(size=(10, 3))
    labels = ["a", "b"] * 5
    model = elm.fit(x, labels, n_hidden=40, c_reg=1e10, seed=2)
    scores = elm.predict(model, x)
    np.testing.assert_allclose(scores, elm.encode_labels(labels, model.classes), atol=1e-3)
    assert [c for c, _ in elm.decode(scores, model.classes)] == labels


def test_predict_zero_beta_and_batching(rng):
    x = rng.normal(size=(7, 3))
    model = elm.fit(x, [0, 1, 2, 0, 1, 2, 0], n_hidden=6)
    zero = elm.with_beta(model, np.zeros_like(model.beta))
    assert not np.any(elm.predict(zero, x))
    rows = np.vstack([elm.predict(model, x[i:i + 1]) for i in range(7)])
    np.testing.assert_allclose(elm.predict(model, x), rows, rtol=1e-14)


def test_decode_examples():
    assert elm.decode([[0.9, -0.2, -0.7]], ["normal", "cpu", "io"]) == [("normal", 0.9)]
    assert elm.decode([[0.5, 0.5]], ["a", "b"]) == [("a", 0.5)]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 100))
def test_decode_scale_invariance(seed, scale):
    s = np.random.default_rng(seed).normal(size=(8, 3))
    base = elm.decode(s, "xyz")
    scaled = elm.decode(s * scale, "xyz")
    assert [c for c, _ in base] == [c for c, _ in scaled]
    np.testing.assert_allclose([m * scale for _, m in base], [m for _, m in scaled], rtol=1e-12)


def test_encode_labels():
    t = elm.encode_labels(["b", "a"], ["a", "b", "c"])
    np.testing.assert_array_equal(t, [[-1, 1, -1], [1, -1, -1]])
    with pytest.raises(ValueError, match="'z'"):
        elm.encode_labels(["z"], ["a", "b"])


def test_model_validation():
    lay = layer(2, 3)
    with pytest.raises(ValueError):
        ElmModel(lay, np.zeros((3, 1)), 1.0, ("a",))
    with pytest.raises(ShapeError):
        ElmModel(lay, np.zeros((4, 2)), 1.0, ("a", "b"))
