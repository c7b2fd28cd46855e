"""Pilot measurement model, LS / LMMSE estimators and their MSE formulas."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import build_czz, complex_normal, czz_blocks, sample_channel, split_z
from .errors import InsufficientPilots, ShapeMismatch, SingularNormalMatrix
from .linalg import NotPD, eig_hermitian, hermitize, solve_hpd
from .pilots import lmmse_error_cov_from_phi

METHODS = ("ls", "lmmse", "dncnn", "ffdnet", "genie")


def db(x):
    return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def sigma2_from_snr_db(snr_db):
    """Noise variance for a training SNR given in dB (gamma_tr = 1/sigma2)."""
    return float(10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True)
class MeasurementModel:
    G: np.ndarray
    phi: object
    pilots: np.ndarray
    sigma2: float

    @property
    def M(self):
        return self.G.shape[1] // (self.phi.K + 1)

    @property
    def fast(self):
        """True when ``G^H G = T_p I`` so estimators reduce to a matched filter."""
        return self.phi.is_orthogonal()


def build_measurement(phi, pilots=None, sigma2=1.0, M=1):
    if pilots is None:
        pilots = np.ones(phi.T_p, dtype=np.complex128)
    pilots = np.asarray(pilots, dtype=np.complex128)
    if pilots.shape != (phi.T_p,):
        raise ShapeMismatch(f"expected {phi.T_p} pilot symbols, got {pilots.shape}")
    if np.max(np.abs(np.abs(pilots) - 1.0)) > 1e-12:
        raise ValueError("pilot symbols must have unit modulus")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    psi = np.kron(phi.entries, np.eye(M))
    G = np.repeat(pilots, M)[:, None] * psi
    G.setflags(write=False)
    return MeasurementModel(G=G, phi=phi, pilots=pilots, sigma2=float(sigma2))


def simulate_rx(m, z, rng):
    """``y = G z + n`` with ``n ~ CN(0, sigma2 I)``.  ``rng`` is a stream or generator."""
    gen = rng.generator() if hasattr(rng, "generator") else rng
    z = np.asarray(z, dtype=np.complex128)
    y = z @ m.G.T
    noise = complex_normal(gen, y.shape, m.sigma2)
    if m.sigma2 == 0:
        return y
    return y + noise


@dataclass(frozen=True)
class EstimateReport:
    z_hat: np.ndarray
    method: str
    M: int
    sq_err_direct: float = float("nan")
    sq_err_cascaded: float = float("nan")

    @property
    def h_d_hat(self):
        return split_z(self.z_hat, self.M)[0]

    @property
    def V_hat(self):
        return split_z(self.z_hat, self.M)[1]

    @property
    def sq_err(self):
        return self.sq_err_direct + self.sq_err_cascaded


def make_report(z_hat, method, M, z_true=None):
    if z_true is None:
        return EstimateReport(z_hat, method, M)
    err = np.abs(np.asarray(z_hat) - z_true) ** 2
    return EstimateReport(z_hat, method, M,
                          float(err[:M].sum()), float(err[M:].sum()))


def _ls_matrix(m, fast=None):
    """Linear map ``F`` with ``z_ls = F y``."""
    if m.phi.T_p < m.phi.K + 1:
        raise InsufficientPilots(f"LS needs T_p >= K+1, got T_p={m.phi.T_p}")
    gh = m.G.conj().T
    if fast is None:
        fast = m.fast
    if fast:
        return gh / m.phi.T_p
    gram = hermitize(gh @ m.G)
    try:
        return solve_hpd(gram, gh)
    except NotPD as exc:
        raise SingularNormalMatrix("G^H G is singular") from exc


def ls_estimate(y, m, z_true=None, fast=None):
    """Least-squares estimate ``(G^H G)^-1 G^H y``.

    ``fast=None`` picks the matched-filter path when Phi is orthogonal.
    ``y`` may also be a 2-D array of stacked trials (rows); the raw
    estimates are then returned as an array.
    """
    y = np.asarray(y)
    z_hat = y @ _ls_matrix(m, fast).T
    if y.ndim > 1:
        return z_hat
    return make_report(z_hat, "ls", m.M, z_true)


def _lmmse_matrix(m, czz, form="auto", blocks=None):
    """Linear map ``F`` with ``z_lmmse = F y``."""
    if m.sigma2 <= 0:
        raise ValueError("LMMSE requires sigma2 > 0")
    gh = m.G.conj().T
    n = gh.shape[0]
    if form == "auto":
        form = "fast" if (m.fast and blocks is not None) else "covariance"
    if form == "fast":
        # G^H G = T_p I and C_zz is block diagonal, so the information form
        # decouples into K+1 independent M x M systems.
        M, T_p = m.M, m.phi.T_p
        out = np.empty((n, gh.shape[1]), dtype=np.complex128)
        eye = np.eye(M)
        cache = {}
        for b, R in enumerate(blocks):
            key = id(R)
            if key not in cache:
                cache[key] = solve_hpd(hermitize(m.sigma2 * eye + T_p * R), R)
            # R (sigma2 I + T_p R)^-1 is the Hermitian transpose of the solve.
            out[b * M:(b + 1) * M] = cache[key].conj().T @ gh[b * M:(b + 1) * M]
        return out
    if form == "covariance":
        x = m.G @ czz
        p = hermitize(x @ gh) + m.sigma2 * np.eye(m.G.shape[0])
        return solve_hpd(p, x).conj().T
    if form == "information":
        info = hermitize(solve_hpd(czz, np.eye(n)) + (gh @ m.G) / m.sigma2)
        return solve_hpd(info, gh / m.sigma2)
    raise ValueError(f"unknown LMMSE form {form!r}")


def lmmse_estimate(y, m, czz, z_true=None, form="auto", blocks=None):
    """LMMSE estimate ``C G^H (G C G^H + sigma2 I)^-1 y``.

    ``form`` selects the covariance form, the information form
    ``(C^-1 + G^H G / sigma2)^-1 G^H y / sigma2``, or ``"fast"`` which needs
    an orthogonal Phi and the diagonal ``blocks`` of C_zz.
    """
    y = np.asarray(y)
    z_hat = y @ _lmmse_matrix(m, czz, form, blocks).T
    if y.ndim > 1:
        return z_hat
    return make_report(z_hat, "lmmse", m.M, z_true)


def lmmse_from_ls(z_ls, p, T_p, sigma2):
    """LMMSE estimate computed from LS estimates under an orthogonal Phi.

    With ``G^H G = T_p I`` the LS estimate is a sufficient statistic, and
    each block becomes ``R (sigma2/T_p I + R)^-1 z_ls``.  Rows of ``z_ls``
    are trials; ``sigma2`` may be a scalar or one value per row.
    """
    z_ls = np.atleast_2d(np.asarray(z_ls, dtype=np.complex128))
    sig = np.broadcast_to(np.asarray(sigma2, dtype=float), (z_ls.shape[0],))
    out = np.empty_like(z_ls)
    M = p.M
    eye = np.eye(M)
    for s2 in np.unique(sig):
        rows = sig == s2
        for b, R in enumerate(czz_blocks(p)):
            W = solve_hpd(hermitize(R + (s2 / T_p) * eye), R).conj().T
            out[rows, b * M:(b + 1) * M] = z_ls[rows, b * M:(b + 1) * M] @ W.T
    return out


def lmmse_error_cov(phi, czz, sigma2, M):
    return lmmse_error_cov_from_phi(phi, czz, sigma2, M)


def analytic_mse_dft(p, T_p, sigma2):
    """LMMSE MSE under an orthogonal (DFT) training matrix, from eigenvalues."""
    lub, _ = eig_hermitian(p.R_ub)
    llb, _ = eig_hermitian(p.R_lb)
    return float(_eig_mse(lub, T_p, sigma2) + p.K * _eig_mse(llb, T_p, sigma2))


def analytic_mse_dft_parts(p, T_p, sigma2):
    """``(direct, cascaded)`` split of :func:`analytic_mse_dft`."""
    lub, _ = eig_hermitian(p.R_ub)
    llb, _ = eig_hermitian(p.R_lb)
    return float(_eig_mse(lub, T_p, sigma2)), float(p.K * _eig_mse(llb, T_p, sigma2))


def _eig_mse(lam, T_p, sigma2):
    lam = np.asarray(lam, dtype=float)
    # lam / (1 + lam T_p / sigma2) == 1 / (1/lam + T_p/sigma2), safe at lam = 0
    return np.sum(lam / (1.0 + lam * T_p / sigma2))


def ls_mse(M, K, T_p, sigma2):
    """Closed-form LS MSE for an orthogonal Phi: ``(total, direct, cascaded)``."""
    return M * (K + 1) * sigma2 / T_p, M * sigma2 / T_p, M * K * sigma2 / T_p


def exp_trace_inv(M, rho):
    """``tr(R^-1)`` for an ``M x M`` exponential correlation matrix."""
    r2 = rho * rho
    return (M + (M - 2) * r2) / (1.0 - r2)


def exp_trace_sq(M, rho):
    """``tr(R^2)`` for an ``M x M`` exponential correlation matrix."""
    r2 = rho * rho
    return (M * (1.0 - r2 * r2) - 2.0 * r2 * (1.0 - r2 ** M)) / (1.0 - r2) ** 2


def asymptotic_mse(p, T_p, sigma2, regime, form="general"):
    """Leading-order LMMSE MSE expansions at high or low training SNR."""
    M, K = p.M, p.K
    if form == "general":
        if regime == "high":
            t_ub = np.real(np.trace(solve_hpd(p.R_ub, np.eye(M))))
            t_lb = np.real(np.trace(solve_hpd(p.R_lb, np.eye(M))))
        else:
            t_ub = np.real(np.trace(p.R_ub @ p.R_ub))
            t_lb = np.real(np.trace(p.R_lb @ p.R_lb))
    elif form == "exponential":
        fn = exp_trace_inv if regime == "high" else exp_trace_sq
        t_ub, t_lb = fn(M, p.rho1), fn(M, p.rho2)
    else:
        raise ValueError(f"unknown form {form!r}")
    if regime == "high":
        return float(M * (K + 1) * sigma2 / T_p - (sigma2 / T_p) ** 2 * (t_ub + K * t_lb))
    if regime == "low":
        return float(M * (K + 1) - (T_p / sigma2) * (t_ub + K * t_lb))
    raise ValueError(f"unknown regime {regime!r}")


@dataclass(frozen=True)
class MseEstimate:
    """Monte Carlo MSE averages with standard errors (sample std / sqrt(trials))."""

    total: float
    direct: float
    cascaded: float
    stderr_total: float
    stderr_direct: float
    stderr_cascaded: float
    trials: int

    def __iter__(self):
        return iter((self.total, self.direct, self.cascaded))


def draw_trials(p, m, rng, trials, workers=1):
    """True ``z`` and received ``y`` for every trial, stacked row-wise.

    Trial ``t`` uses ``rng.child(t)`` for both the channel and the noise,
    so results do not depend on ``workers``.
    """
    def one(t):
        gen = rng.child(t).generator()
        z = sample_channel(p, gen).z
        return z, simulate_rx(m, z, gen)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            pairs = list(ex.map(one, range(trials)))
    else:
        pairs = [one(t) for t in range(trials)]
    Z = np.stack([a for a, _ in pairs])
    Y = np.stack([b for _, b in pairs])
    return Z, Y


def estimate_batch(method, Y, m, p, czz=None, weights=None, Z=None):
    """Apply an estimator to stacked observations ``Y`` (one trial per row)."""
    if method == "genie":
        if Z is None:
            raise ValueError("genie estimation needs the true channels")
        return np.array(Z, copy=True)
    if method == "ls":
        return ls_estimate(Y, m)
    if method == "lmmse":
        if czz is None:
            czz = build_czz(p)
        return lmmse_estimate(Y, m, czz, blocks=czz_blocks(p))
    if method in ("dncnn", "ffdnet"):
        from .cnn.network import cnn_estimate

        if weights is None:
            raise ValueError(f"{method} estimation needs trained weights")
        if weights.arch != method:
            raise ValueError(f"weights are for {weights.arch}, not {method}")
        return cnn_estimate(weights, ls_estimate(Y, m), m.M, sigma2=m.sigma2, T_p=m.phi.T_p)
    raise ValueError(f"unknown method {method!r}")


def mse_from_errors(err, M):
    sq = np.abs(err) ** 2
    d = sq[:, :M].sum(axis=1)
    c = sq[:, M:].sum(axis=1)
    t = d + c
    n = len(t)
    se = (lambda a: float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"))
    return MseEstimate(float(t.mean()), float(d.mean()), float(c.mean()),
                       se(t), se(d), se(c), n)


def empirical_mse(method, p, phi, sigma2, trials, rng, weights=None, workers=1):
    """Average squared error of ``method`` over independent trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = build_measurement(phi, sigma2=sigma2, M=p.M)
    Z, Y = draw_trials(p, m, rng, trials, workers)
    Zh = estimate_batch(method, Y, m, p, weights=weights, Z=Z)
    return mse_from_errors(Zh - Z, p.M)
