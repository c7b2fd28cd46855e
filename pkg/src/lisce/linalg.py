"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  The helpers
here add the validation and failure modes the estimators rely on:
Hermitian checks, PSD clamping and a Cholesky solve that refuses
near-singular pivots.
"""

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, NotHermitian, NotPD, NotPSD, ShapeMismatch

# Eigenvalues above -PSD_TOL are treated as zero when taking square roots.
PSD_TOL = 1e-10
HERMITIAN_TOL = 1e-10
PIVOT_TOL = 1e-12


def as_matrix(a):
    """Return ``a`` as a finite 2-D complex128 array."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def check_hermitian(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NotHermitian(f"matrix is not square: {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > HERMITIAN_TOL * scale:
        raise NotHermitian(f"asymmetry {dev:.3e} exceeds tolerance")
    return a


def hermitize(a):
    return 0.5 * (a + a.conj().T)


def kron(a, b):
    return np.kron(as_matrix(a), as_matrix(b))


def one_norm(a):
    """Maximum absolute column sum."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(a), axis=0)))


def eig_hermitian(a):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    a = check_hermitian(a)
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(a)
        raise ConvergenceError(f"eigensolver failed (cond={cond:.3e})") from exc
    return w, u


def herm_sqrt(r):
    """Principal square root of a PSD matrix, clamping tiny negative eigenvalues."""
    w, u = eig_hermitian(r)
    if w.size and w[0] < -PSD_TOL:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} < -{PSD_TOL}")
    s = np.sqrt(np.clip(w, 0.0, None))
    return (u * s) @ u.conj().T


def cholesky(a):
    """Lower Cholesky factor; raises NotPD on small or failed pivots."""
    a = check_hermitian(a)
    n = a.shape[0]
    try:
        low = scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPD("Cholesky factorization failed") from exc
    pivots = np.real(np.diag(low)) ** 2
    floor = PIVOT_TOL * np.real(np.trace(a)) / n
    if np.any(pivots <= floor):
        raise NotPD(f"pivot {pivots.min():.3e} below {floor:.3e}")
    return low


def solve_hpd(a, b):
    """Solve ``a x = b`` for Hermitian positive definite ``a``."""
    low = cholesky(a)
    b = np.asarray(b, dtype=np.complex128)
    return scipy.linalg.cho_solve((low, True), b, check_finite=False)
