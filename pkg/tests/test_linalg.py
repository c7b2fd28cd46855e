import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lisce.errors import NotHermitian, NotPD, NotPSD, ShapeMismatch
from lisce.linalg import (as_matrix, check_hermitian, cholesky, eig_hermitian, herm_sqrt,
                          kron, one_norm, solve_hpd)

from .conftest import random_hpd


def test_kron_with_identity_example():
    got = kron(np.array([[1, 2], [3, 4]]), np.eye(2))
    want = np.array([[1, 0, 2, 0], [0, 1, 0, 2], [3, 0, 4, 0], [0, 3, 0, 4]])
    np.testing.assert_array_equal(got, want)


def test_herm_sqrt_squares_back():
    r = np.array([[1, 0.5], [0.5, 1]])
    s = herm_sqrt(r)
    assert np.linalg.norm(s @ s - r) <= 1e-10
    np.testing.assert_allclose(s, s.conj().T)


def test_herm_sqrt_accepts_tiny_negative_eigenvalue():
    u = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))[0]
    r = u @ np.diag([1.0, 0.5, -5e-11]) @ u.T
    s = herm_sqrt(r)
    assert np.all(np.isfinite(s))


def test_herm_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        herm_sqrt(np.diag([1.0, -1e-3]))


def test_check_hermitian_rejects_asymmetric():
    with pytest.raises(NotHermitian):
        check_hermitian(np.array([[1, 2], [0, 1]]))


def test_as_matrix_rejects_3d_and_nonfinite():
    with pytest.raises(ShapeMismatch):
        as_matrix(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_matrix(np.array([[np.nan]]))


def test_eigenvalues_of_exponential_correlation_are_positive():
    idx = np.arange(6)
    r = 0.9 ** np.abs(idx[:, None] - idx[None, :])
    w, u = eig_hermitian(r)
    assert np.all(w > 0)
    np.testing.assert_allclose(u @ np.diag(w) @ u.conj().T, r, atol=1e-12)


def test_cholesky_rejects_singular():
    with pytest.raises(NotPD):
        cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_one_norm_is_max_column_sum():
    assert one_norm(np.array([[1, -2], [3, 4]])) == 6.0
    assert one_norm(np.zeros((0, 0))) == 0.0


@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_solve_hpd_matches_dense_solve(n, seed):
    gen = np.random.default_rng(seed)
    a = random_hpd(gen, n)
    b = gen.standard_normal((n, 2)) + 1j * gen.standard_normal((n, 2))
    x = solve_hpd(a, b)
    np.testing.assert_allclose(a @ x, b, atol=1e-9)
    low = cholesky(a)
    np.testing.assert_allclose(low @ low.conj().T, a, atol=1e-10)


@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_herm_sqrt_property(n, seed):
    r = random_hpd(np.random.default_rng(seed), n, shift=0.0)
    s = herm_sqrt(r)
    assert np.linalg.norm(s @ s - r) <= 1e-9 * max(1.0, np.linalg.norm(r))
