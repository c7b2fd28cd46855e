"""Downlink beamforming from channel estimates and achievable-rate evaluation."""

from dataclasses import dataclass

import numpy as np

from .channel import build_czz, split_z
from .errors import DegenerateEstimate
from .estimation import build_measurement, draw_trials, estimate_batch, sigma2_from_snr_db
from .pilots import dft_phase_matrix


@dataclass(frozen=True)
class BeamformingSolution:
    phi_d: np.ndarray  # LIS phases, unit modulus
    w: np.ndarray      # BS beamformer, unit norm


@dataclass(frozen=True)
class RateConfig:
    gamma_bar: float       # linear transmit SNR P_tx / sigma_d^2
    T_p: int
    T_c: int = 196

    def __post_init__(self):
        if self.gamma_bar <= 0:
            raise ValueError("gamma_bar must be positive")
        if not 0 < self.T_p < self.T_c:
            raise ValueError(f"need 0 < T_p < T_c, got T_p={self.T_p}, T_c={self.T_c}")

    @property
    def prelog(self):
        return 1.0 - self.T_p / self.T_c


def design_beamformers(h_d_hat, V_hat):
    """Phase-align every cascaded path with the direct path, then MRT."""
    h_d_hat = np.asarray(h_d_hat)
    V_hat = np.asarray(V_hat)
    phi_d = np.exp(-1j * np.angle(V_hat.T @ h_d_hat.conj()))
    g = h_d_hat.conj() + V_hat.conj() @ phi_d.conj()
    norm = np.linalg.norm(g)
    if norm < 1e-30:
        raise DegenerateEstimate("combined channel estimate has zero norm")
    return BeamformingSolution(phi_d=phi_d, w=g / norm)


def received_gain(h_d, V, sol):
    """``|(h_d^T + phi_d^T V^T) w|^2``."""
    return float(np.abs((h_d + V @ sol.phi_d) @ sol.w) ** 2)


def achievable_rate(h_d, V, sol, cfg):
    return cfg.prelog * float(np.log2(1.0 + cfg.gamma_bar * received_gain(h_d, V, sol)))


def rate_gains(method, p, gamma_tr_db, trials, rng, T_p=None, weights=None, workers=1):
    """Received beamforming gain on the true channel, one value per trial.

    The gain does not depend on the transmit SNR, so one call serves a
    whole SNR sweep.
    """
    T_p = T_p or p.K + 1
    phi = dft_phase_matrix(T_p, p.K)
    m = build_measurement(phi, sigma2=sigma2_from_snr_db(gamma_tr_db), M=p.M)
    Z, Y = draw_trials(p, m, rng, trials, workers)
    czz = build_czz(p) if method == "lmmse" else None
    Zh = estimate_batch(method, Y, m, p, czz=czz, weights=weights, Z=Z)
    gains = np.empty(trials)
    for t in range(trials):
        h_d, V = split_z(Z[t], p.M)
        hh, Vh = split_z(Zh[t], p.M)
        gains[t] = received_gain(h_d, V, design_beamformers(hh, Vh))
    return gains


def rates_from_gains(gains, cfg):
    r = cfg.prelog * np.log2(1.0 + cfg.gamma_bar * np.asarray(gains))
    se = float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else float("nan")
    return float(r.mean()), se


def monte_carlo_rate(method, p, gamma_tr_db, cfg, trials, rng, weights=None, workers=1):
    """Mean achievable rate and its standard error.

    Each trial draws a channel, trains with a DFT phase matrix at
    ``gamma_tr_db``, designs beamformers from the ``method`` estimate and
    evaluates the rate on the true channel.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gains = rate_gains(method, p, gamma_tr_db, trials, rng, cfg.T_p, weights, workers)
    return rates_from_gains(gains, cfg)

