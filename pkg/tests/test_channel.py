import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lisce.channel import (CorrelationProfile, RngStream, build_czz, czz_blocks,
                           exp_corr_matrix, sample_channel, split_z)
from lisce.errors import InvalidRho


def test_exp_corr_example():
    np.testing.assert_allclose(exp_corr_matrix(3, 0.5),
                               [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])


@pytest.mark.parametrize("rho", [-0.1, 1.0, 1.5])
def test_rho_out_of_range(rho):
    with pytest.raises(InvalidRho):
        exp_corr_matrix(3, rho)
    with pytest.raises(InvalidRho):
        CorrelationProfile(2, 2, rho1=rho)


def test_same_stream_reproduces_bit_for_bit(small_profile):
    a = sample_channel(small_profile, RngStream(5, 9)).z
    b = sample_channel(small_profile, RngStream(5, 9)).z
    c = sample_channel(small_profile, RngStream(5, 10)).z
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_children_are_distinct_and_stable():
    base = RngStream(3)
    ids = {base.child(i).stream_id for i in range(1000)}
    assert len(ids) == 1000
    assert base.child(7) == RngStream(3).child(7)


def test_cascaded_channel_is_column_scaled(small_profile, rng):
    ch = sample_channel(small_profile, rng)
    for k in range(small_profile.K):
        np.testing.assert_allclose(ch.V[:, k], ch.H_lb[:, k] * ch.h_ul[k])
    h_d, V = split_z(ch.z, small_profile.M)
    np.testing.assert_array_equal(h_d, ch.h_d)
    np.testing.assert_array_equal(V, ch.V)


def test_czz_structure(small_profile):
    c = build_czz(small_profile)
    M, K = small_profile.M, small_profile.K
    assert c.shape == (M * (K + 1),) * 2
    np.testing.assert_array_equal(c[:M, :M], small_profile.R_ub)
    for i in range(1, K + 1):
        np.testing.assert_array_equal(c[i * M:(i + 1) * M, i * M:(i + 1) * M], small_profile.R_lb)
    blocks = czz_blocks(small_profile)
    assert len(blocks) == K + 1
    off = c.copy()
    for i in range(K + 1):
        off[i * M:(i + 1) * M, i * M:(i + 1) * M] = 0
    assert not off.any()


def test_empirical_covariance_matches_czz():
    p = CorrelationProfile(3, 3, 0.5, 0.7, 0.6)
    gen = RngStream(11).generator()
    Z = np.stack([sample_channel(p, gen).z for _ in range(100_000)])
    emp = Z.T @ Z.conj() / len(Z)
    c = build_czz(p)
    assert np.linalg.norm(emp - c) / np.linalg.norm(c) < 0.03


def test_cascaded_entries_have_positive_excess_kurtosis():
    # Products of Gaussians are heavier tailed than a Gaussian.
    p = CorrelationProfile(2, 2, 0.3, 0.3, 0.3)
    gen = RngStream(12).generator()
    x = np.array([sample_channel(p, gen).V[0, 0].real for _ in range(100_000)])
    x = x - x.mean()
    k = np.mean(x ** 4) / np.mean(x ** 2) ** 2 - 3.0
    se = np.sqrt(24.0 / len(x))
    assert k > 3 * se


def test_sqrt_factors_are_read_only(small_profile):
    for f in small_profile.sqrt_factors:
        with pytest.raises(ValueError):
            f[0, 0] = 0


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 32))
def test_split_z_round_trip(M, K, seed):
    p = CorrelationProfile(M, K, 0.2, 0.4, 0.6)
    ch = sample_channel(p, RngStream(seed))
    h_d, V = split_z(np.stack([ch.z, ch.z]), M)
    assert h_d.shape == (2, M) and V.shape == (2, M, K)
    np.testing.assert_array_equal(V[1], ch.V)
