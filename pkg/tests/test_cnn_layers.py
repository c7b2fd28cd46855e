import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lisce.cnn import layers as L
from lisce.errors import ShapeMismatch


def naive_conv(x, k, b):
    B, H, W, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((B, H, W, k.shape[3]))
    for i in range(H):
        for j in range(W):
            patch = xp[:, i:i + 3, j:j + 3, :]
            out[:, i, j, :] = np.einsum("bdec,deco->bo", patch, k)
    return out + b


@given(st.integers(1, 3), st.integers(1, 5), st.integers(1, 5), st.integers(1, 3),
       st.integers(1, 3), st.integers(0, 2 ** 32))
def test_conv_matches_naive(B, H, W, cin, cout, seed):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((B, H, W, cin))
    k = gen.standard_normal((3, 3, cin, cout))
    b = gen.standard_normal(cout)
    np.testing.assert_allclose(L.conv2d_same(x, k, b), naive_conv(x, k, b), atol=1e-12)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 32))
def test_col2im_is_adjoint_of_im2col(H, W, seed):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((2, H, W, 3))
    c = gen.standard_normal((2, H, W, 27))
    assert np.sum(L.im2col(x) * c) == pytest.approx(np.sum(x * L.col2im(c, 3)))


def test_conv_backward_input_gradient_matches_adjoint():
    gen = np.random.default_rng(0)
    x = gen.standard_normal((2, 4, 5, 3))
    k = gen.standard_normal((3, 3, 3, 2))
    d = gen.standard_normal((2, 4, 5, 2))
    _, cols = L.conv2d_forward(x, k, np.zeros(2))
    dx, dk, db = L.conv2d_backward(d, cols, k)
    np.testing.assert_allclose(dx, L.col2im(d @ k.reshape(27, 2).T, 3), atol=1e-12)
    np.testing.assert_allclose(db, d.sum(axis=(0, 1, 2)))


def test_conv_shape_errors():
    with pytest.raises(ShapeMismatch):
        L.conv2d_forward(np.zeros((1, 2, 2, 3)), np.zeros((3, 3, 2, 1)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        L.conv2d_forward(np.zeros((1, 2, 2, 2)), np.zeros((5, 5, 2, 1)), np.zeros(1))


def test_batch_norm_train_statistics():
    gen = np.random.default_rng(1)
    x = 3.0 + 2.0 * gen.standard_normal((8, 4, 5, 3))
    c = x.shape[-1]
    out, cache = L.batch_norm_forward(x, np.ones(c), np.zeros(c), None, None, "train")
    assert np.all(np.abs(out.mean(axis=(0, 1, 2))) <= 1e-6)
    np.testing.assert_allclose(out.var(axis=(0, 1, 2)), 1.0, atol=1e-4)
    np.testing.assert_allclose(cache["mean"], x.mean(axis=(0, 1, 2)))


def test_batch_norm_infer_uses_running_stats():
    x = np.ones((2, 2, 2, 1)) * 5.0
    out, _ = L.batch_norm_forward(x, np.array([2.0]), np.array([1.0]), np.array([4.0]),
                                  np.array([1.0 - L.BN_EPS]), "infer")
    np.testing.assert_allclose(out, 3.0)
    with pytest.raises(ValueError):
        L.batch_norm_forward(x, 1, 0, 0, 1, "bogus")


def test_running_average_momentum():
    np.testing.assert_allclose(L.update_running(np.array([1.0]), np.array([3.0])), [1.2])


def test_relu():
    out, mask = L.relu_forward(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out, [0, 0, 2])
    np.testing.assert_array_equal(L.relu_backward(np.ones(3), mask), [0, 0, 1])
