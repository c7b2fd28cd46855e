"""Training phase-shift matrices and LMMSE-driven phase optimization.

A phase-shift matrix ``Phi`` has ``T_p`` rows (training steps) and ``K+1``
columns; column 0 multiplies the direct channel and is fixed to ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPilots, NonMonotone, ShapeMismatch
from .linalg import hermitize, one_norm, solve_hpd

KINDS = ("dft", "onoff", "random", "mm-optimized", "custom")


@dataclass(frozen=True)
class PhaseShiftMatrix:
    entries: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.complex128)
        if e.ndim != 2 or e.shape[1] < 2:
            raise ShapeMismatch(f"phase matrix must be T_p x (K+1), got {e.shape}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not np.array_equal(e[:, 0], np.ones(e.shape[0])):
            raise ValueError("column 0 must be all ones")
        if self.kind == "onoff":
            if not np.all(np.isin(e[:, 1:], (0, 1))):
                raise ValueError("on-off entries must be 0 or 1")
        elif np.max(np.abs(np.abs(e) - 1.0)) > 1e-12:
            raise ValueError("entries must have unit modulus")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def T_p(self):
        return self.entries.shape[0]

    @property
    def K(self):
        return self.entries.shape[1] - 1

    def gram(self):
        """``Phi^H Phi``."""
        return self.entries.conj().T @ self.entries

    def is_orthogonal(self, tol=1e-10):
        """True when ``Phi^H Phi = T_p I`` (enables the fast estimator paths)."""
        g = self.gram()
        return np.max(np.abs(g - self.T_p * np.eye(self.K + 1))) <= tol * self.T_p


def _check_pilots(T_p, K):
    if T_p < K + 1:
        raise InsufficientPilots(f"need T_p >= K+1 = {K + 1}, got T_p={T_p}")


def dft_phase_matrix(T_p, K):
    _check_pilots(T_p, K)
    t = np.arange(T_p)[:, None]
    k = np.arange(K + 1)[None, :]
    e = np.exp(-2j * np.pi * ((t * k) % T_p) / T_p)
    e[:, 0] = 1.0
    return PhaseShiftMatrix(e, "dft")


def onoff_phase_matrix(T_p, K):
    """Row 0 has every element off, row t switches on element t alone.

    Rows past ``K`` repeat the all-off row.
    """
    _check_pilots(T_p, K)
    e = np.zeros((T_p, K + 1), dtype=np.complex128)
    e[:, 0] = 1.0
    for t in range(1, K + 1):
        e[t, t] = 1.0
    return PhaseShiftMatrix(e, "onoff")


def random_phase_matrix(T_p, K, rng):
    _check_pilots(T_p, K)
    gen = rng.generator()
    theta = gen.uniform(0.0, 2.0 * np.pi, size=(T_p, K))
    e = np.ones((T_p, K + 1), dtype=np.complex128)
    e[:, 1:] = np.exp(1j * theta)
    return PhaseShiftMatrix(e, "random")


def _expanded(phi, M):
    e = phi.entries if isinstance(phi, PhaseShiftMatrix) else np.asarray(phi)
    return np.kron(e, np.eye(M))


def lmmse_error_cov_from_phi(phi, czz, sigma2, M):
    """``(C^-1 + (Phi^H Phi kron I_M)/sigma2)^-1`` in covariance (Woodbury) form.

    Evaluated as ``C - C Pt^H (Pt C Pt^H + sigma2 I)^-1 Pt C`` with
    ``Pt = Phi kron I_M``, which needs only an HPD solve and stays well
    conditioned when ``C`` is nearly singular.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    pt = _expanded(phi, M)
    if pt.shape[1] != czz.shape[0]:
        raise ShapeMismatch(f"Phi kron I_M has {pt.shape[1]} columns, C_zz is {czz.shape}")
    x = pt @ czz
    p = hermitize(x @ pt.conj().T) + sigma2 * np.eye(pt.shape[0])
    return hermitize(czz - x.conj().T @ solve_hpd(p, x))


def lmmse_mse_of_phi(phi, czz, sigma2, M):
    return float(np.real(np.trace(lmmse_error_cov_from_phi(phi, czz, sigma2, M))))


def _mm_terms(phi_t, czz, sigma2, M):
    pt = _expanded(phi_t, M)
    x = pt @ czz
    p = hermitize(x @ pt.conj().T) + sigma2 * np.eye(pt.shape[0])
    a = solve_hpd(p, x)
    return pt, a


def surrogate_value(phi, phi_t, czz, sigma2, M):
    """Tangent majorizer of the LMMSE MSE around ``phi_t``.

    ``g = tr(C) + sigma2 tr(A A^H) + tr(A A^H Pt C Pt^H) - 2 Re tr(C A^H Pt)``
    with ``A = (Pt_t C Pt_t^H + sigma2 I)^-1 Pt_t C``.  The constant
    ``tr(C) + sigma2 tr(A A^H)`` is what makes ``g(phi_t, phi_t)`` equal to
    the MSE at ``phi_t``; it does not influence the minimizer.
    """
    _, a = _mm_terms(phi_t, czz, sigma2, M)
    pt = _expanded(phi, M)
    aah = a @ a.conj().T
    const = np.real(np.trace(czz)) + sigma2 * np.real(np.trace(aah))
    quad = np.real(np.trace(aah @ pt @ czz @ pt.conj().T))
    lin = np.real(np.trace(czz @ a.conj().T @ pt))
    return float(const + quad - 2.0 * lin)


def mm_lambda(czz, a):
    """Upper bound on the largest eigenvalue of ``C^T kron (A A^H)``."""
    return one_norm(czz) * one_norm(a @ a.conj().T)


def mm_step(phi_t, czz, sigma2, M):
    """One MM update.  Returns ``(next Phi entries, lambda_t)``."""
    e = phi_t.entries if isinstance(phi_t, PhaseShiftMatrix) else phi_t
    K1 = e.shape[1]
    pt, a = _mm_terms(e, czz, sigma2, M)
    aah = a @ a.conj().T
    lam = mm_lambda(czz, a)
    b = lam * pt - aah @ pt @ czz + a @ czz
    # Sum of the M stride-M sub-blocks: B~[t, k] = sum_m B[tM+m, kM+m].
    bt = np.einsum("tmkm->tk", b.reshape(e.shape[0], M, K1, M))
    nxt = np.ones_like(e)
    # angle(0) == 0, so a zero coefficient maps to phase 1.
    nxt[:, 1:] = np.exp(1j * np.angle(bt[:, 1:]))
    return nxt, lam


@dataclass
class MmTrace:
    iterations: int = 0
    mse_per_iter: list = field(default_factory=list)
    lambda_per_iter: list = field(default_factory=list)
    converged: bool = False
    epsilon: float = 1e-6

    def rows(self):
        """``(iter, mse_linear, mse_db, lambda)`` tuples; lambda is NaN at iter 0."""
        out = []
        for i, mse in enumerate(self.mse_per_iter):
            lam = self.lambda_per_iter[i - 1] if i > 0 else float("nan")
            out.append((i, mse, 10.0 * np.log10(mse), lam))
        return out


def mm_optimize_phase(czz, sigma2, M, K, epsilon=1e-6, max_iter=2000, init=None,
                      rng=None, monotone_slack=1e-9):
    """Majorization-minimization over unit-modulus training matrices with T_p = K+1."""
    if init is None:
        if rng is None:
            raise ValueError("either init or rng is required")
        init = random_phase_matrix(K + 1, K, rng)
    if init.T_p != K + 1 or init.K != K:
        raise ShapeMismatch(f"MM requires a (K+1) x (K+1) init, got {init.entries.shape}")
    if czz.shape[0] != M * (K + 1):
        raise ShapeMismatch("C_zz dimension does not match M(K+1)")

    e = init.entries.copy()
    trace = MmTrace(epsilon=epsilon)
    mse = lmmse_mse_of_phi(e, czz, sigma2, M)
    trace.mse_per_iter.append(mse)
    for _ in range(max_iter):
        e_next, lam = mm_step(e, czz, sigma2, M)
        mse_next = lmmse_mse_of_phi(e_next, czz, sigma2, M)
        if mse_next > mse * (1.0 + monotone_slack):
            raise NonMonotone(f"MSE rose from {mse!r} to {mse_next!r}")
        trace.iterations += 1
        trace.mse_per_iter.append(mse_next)
        trace.lambda_per_iter.append(lam)
        done = mse - mse_next <= epsilon
        e, mse = e_next, mse_next
        if done:
            trace.converged = True
            break
    return PhaseShiftMatrix(e, "mm-optimized"), trace
