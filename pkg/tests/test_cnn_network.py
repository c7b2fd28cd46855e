import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lisce.channel import RngStream
from lisce.cnn.gradcheck import compare_grads, relu_margin
from lisce.cnn.network import (cnn_estimate, dncnn_forward, ffdnet_forward, ffdnet_pack,
                               ffdnet_unpack, forward, from_image, init_weights, layer_plan,
                               loss_and_grads, noise_level, to_image, zero_weights)
from lisce.errors import OddAntennaCount, ShapeMismatch


def test_layer_plan():
    assert layer_plan("dncnn", 4, 8) == [(2, 8, False), (8, 8, True), (8, 8, True), (8, 2, False)]
    assert layer_plan("ffdnet", 3, 2) == [(5, 2, False), (2, 2, True), (2, 4, False)]
    with pytest.raises(ValueError):
        layer_plan("dncnn", 1, 4)
    with pytest.raises(ValueError):
        layer_plan("unet", 4, 4)


def test_to_image_layout():
    M, K = 3, 2
    z = np.arange(M * (K + 1)) + 1j * (100 + np.arange(M * (K + 1)))
    img = to_image(z, M)
    assert img.shape == (1, M, K + 1, 2)
    for m in range(M):
        for k in range(K + 1):
            assert img[0, m, k, 0] == z[k * M + m].real
            assert img[0, m, k, 1] == z[k * M + m].imag
    np.testing.assert_array_equal(from_image(img)[0], z)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2 ** 32))
def test_pack_unpack_bijection(half_M, W, B, seed):
    img = np.random.default_rng(seed).standard_normal((B, 2 * half_M, W, 2))
    packed = ffdnet_pack(img, 0.5, 4)
    assert packed.shape == (B, half_M, W, 5)
    np.testing.assert_array_equal(ffdnet_unpack(packed), img)
    np.testing.assert_allclose(packed[..., 4], noise_level(0.5, 4))
    np.testing.assert_array_equal(packed[:, 0, :, 1], img[:, 1, :, 0])


def test_noise_level_value():
    assert noise_level(1.0, 8) == pytest.approx(0.25)


def test_odd_antenna_count_rejected():
    with pytest.raises(OddAntennaCount):
        ffdnet_pack(np.zeros((1, 3, 2, 2)), 1.0, 2)
    with pytest.raises(OddAntennaCount):
        init_weights("ffdnet", 3, 2, 3, 2, RngStream(0))


@pytest.mark.parametrize("arch", ["dncnn", "ffdnet"])
def test_zero_parameters_give_identity(arch):
    w = zero_weights(arch, 5, 3, 4, 3)
    img = np.random.default_rng(0).standard_normal((2, 4, 4, 2)).astype(np.float32)
    for mode in ("train", "infer"):
        np.testing.assert_array_equal(forward(w, img, mode, 0.3, 4), img)


def test_fresh_network_is_near_identity():
    w = init_weights("dncnn", 8, 4, 10, 10, RngStream(0))
    img = np.random.default_rng(1).standard_normal((4, 10, 11, 2)).astype(np.float32)
    res = forward(w, img, "infer") - img
    assert np.sqrt(np.mean(res ** 2)) < 0.1


def test_arch_specific_entry_points():
    wd = init_weights("dncnn", 3, 2, 4, 3, RngStream(0))
    wf = init_weights("ffdnet", 3, 2, 4, 3, RngStream(0))
    img = np.zeros((1, 4, 4, 2), np.float32)
    assert dncnn_forward(img, wd).shape == img.shape
    assert ffdnet_forward(img, 1.0, 4, wf).shape == img.shape
    with pytest.raises(ValueError):
        dncnn_forward(img, wf)
    with pytest.raises(ValueError):
        ffdnet_forward(img, 1.0, 4, wd)
    with pytest.raises(ValueError):
        forward(wf, img)
    with pytest.raises(ShapeMismatch):
        forward(wd, np.zeros((1, 4, 4, 3), np.float32))


def test_loss_quadratic_in_target_offset():
    w = init_weights("dncnn", 3, 2, 4, 3, RngStream(1)).astype(np.float64)
    gen = np.random.default_rng(2)
    x = gen.standard_normal((3, 4, 4, 2))
    t = gen.standard_normal((3, 4, 4, 2))
    d = gen.standard_normal((3, 4, 4, 2))
    l0, _ = loss_and_grads(w, x, t)
    l1, _ = loss_and_grads(w, x, t + d)
    l2, _ = loss_and_grads(w, x, t + 2 * d)
    # f(s) = ||e - s d||^2 / n is quadratic in s: f(2) - 2 f(1) + f(0) = 2 ||d||^2 / n.
    assert l2 - 2 * l1 + l0 == pytest.approx(2 * np.sum(d ** 2) / 3, rel=1e-9)


def _unit_scale_weights(arch, seed):
    """Float64 miniature with O(1) parameters so finite differences are well scaled."""
    w = init_weights(arch, 3, 2, 4, 3, RngStream(seed), np.float64, output_scale=1.0)
    gen = RngStream(seed).child(1).generator()
    for layer in w.layers:
        layer.kernel[...] = gen.standard_normal(layer.kernel.shape)
        layer.bias[...] = gen.standard_normal(layer.bias.shape)
        if layer.bn is not None:
            layer.bn.gamma[...] = 1.0 + 0.5 * gen.standard_normal(layer.bn.gamma.shape)
            layer.bn.beta[...] = gen.standard_normal(layer.bn.beta.shape)
    return w


def gradcheck_instance(arch, margin=0.02):
    """First seeded instance whose ReLU inputs all stay clear of the kink."""
    for seed in range(200):
        w = _unit_scale_weights(arch, seed)
        gen = RngStream(seed).child(2).generator()
        x = gen.standard_normal((4, 4, 4, 2))
        t = gen.standard_normal((4, 4, 4, 2))
        sigma = np.array([0.5, 1.0, 1.5, 2.0])
        if relu_margin(w, x, sigma, 4) >= margin:
            return w, x, t, sigma
    raise AssertionError("no kink-free instance found")


@pytest.mark.parametrize("arch", ["dncnn", "ffdnet"])
def test_gradients_match_finite_differences(arch):
    w, x, t, sigma = gradcheck_instance(arch)
    errs = compare_grads(w, x, t, sigma, 4, h=1e-3)
    assert max(errs.values()) <= 1e-6, errs


def test_cnn_estimate_chunks_consistently():
    w = init_weights("ffdnet", 3, 2, 4, 3, RngStream(3))
    z = np.random.default_rng(4).standard_normal((7, 16)) + 0j
    a = cnn_estimate(w, z, 4, 0.5, 4, chunk=3)
    b = cnn_estimate(w, z, 4, 0.5, 4, chunk=100)
    np.testing.assert_allclose(a, b, rtol=1e-6)
    assert a.shape == (7, 16)
