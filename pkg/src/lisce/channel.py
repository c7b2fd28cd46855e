"""Correlated Rayleigh channel model for the LIS-aided MISO uplink.

The unknown vector is ``z = [h_d; v_1; ...; v_K]`` where ``v_i`` is the
i-th column of the cascaded channel ``V = H_lb diag(h_ul)``.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import block_diag

from .errors import InvalidRho, ShapeMismatch
from .linalg import herm_sqrt

_MASK64 = (1 << 64) - 1


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox generator, so any stream can be reconstructed
    independently of how many other streams were consumed before it.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")

    def generator(self):
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))

    def child(self, index):
        """Independent sub-stream, e.g. one per Monte Carlo trial."""
        mixed = _splitmix64(self.stream_id ^ _splitmix64(int(index) + 1))
        return RngStream(self.seed, mixed)


def complex_normal(gen, shape, var=1.0):
    """CN(0, var) samples: real and imaginary parts each with variance var/2."""
    re = gen.standard_normal(shape)
    im = gen.standard_normal(shape)
    return np.sqrt(var / 2.0) * (re + 1j * im)


def exp_corr_matrix(n, rho):
    """Exponential correlation matrix with entries ``rho**|i-j|``."""
    if not 0.0 <= rho < 1.0:
        raise InvalidRho(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(n)
    return (float(rho) ** np.abs(idx[:, None] - idx[None, :])).astype(np.complex128)


@dataclass(frozen=True)
class CorrelationProfile:
    M: int
    K: int
    rho1: float = 0.0
    rho2: float = 0.0
    rho3: float = 0.0

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ValueError(f"M and K must be >= 1, got M={self.M}, K={self.K}")
        for name in ("rho1", "rho2", "rho3"):
            rho = getattr(self, name)
            if not 0.0 <= rho < 1.0:
                raise InvalidRho(f"{name} must lie in [0, 1), got {rho}")

    @property
    def n(self):
        """Length of the stacked unknown vector z."""
        return self.M * (self.K + 1)

    @cached_property
    def R_ub(self):
        return exp_corr_matrix(self.M, self.rho1)

    @cached_property
    def R_lb(self):
        return exp_corr_matrix(self.M, self.rho2)

    @cached_property
    def S_lb(self):
        return exp_corr_matrix(self.K, self.rho3)

    @cached_property
    def sqrt_factors(self):
        """Cached ``(R_ub^1/2, R_lb^1/2, S_lb^1/2)``."""
        factors = tuple(herm_sqrt(r) for r in (self.R_ub, self.R_lb, self.S_lb))
        for f in factors:
            f.setflags(write=False)
        return factors


@dataclass(frozen=True)
class ChannelRealization:
    h_d: np.ndarray
    H_lb: np.ndarray
    h_ul: np.ndarray

    @property
    def V(self):
        return self.H_lb * self.h_ul[None, :]

    @property
    def z(self):
        return np.concatenate([self.h_d, self.V.reshape(-1, order="F")])


def sample_channel(p, rng):
    """Draw one channel realization.

    ``rng`` may be an :class:`RngStream` or an already-constructed numpy
    generator (used when several draws share one stream).
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    sq_ub, sq_lb, sq_s = p.sqrt_factors
    h_d = sq_ub @ complex_normal(gen, p.M)
    H_lb = sq_lb @ complex_normal(gen, (p.M, p.K)) @ sq_s
    h_ul = complex_normal(gen, p.K)
    return ChannelRealization(h_d=h_d, H_lb=H_lb, h_ul=h_ul)


def split_z(z, M):
    """Split ``z`` into ``(h_d, V)``."""
    z = np.asarray(z)
    if z.shape[-1] % M:
        raise ShapeMismatch(f"length {z.shape[-1]} is not a multiple of M={M}")
    h_d = z[..., :M]
    K = z.shape[-1] // M - 1
    V = z[..., M:].reshape(z.shape[:-1] + (K, M)).swapaxes(-1, -2)
    return h_d, V


@lru_cache(maxsize=64)
def _verify_cascaded_blocks(p):
    big = np.kron(p.S_lb, p.R_lb)
    M = p.M
    for i in range(p.K):
        blk = big[i * M:(i + 1) * M, i * M:(i + 1) * M]
        assert np.array_equal(blk, p.R_lb), "Kronecker slice differs from R_lb"
    return True


def build_czz(p):
    """Block-diagonal prior covariance of z.

    Each cascaded block is the i-th diagonal ``M x M`` block of
    ``S_lb kron R_lb``, which equals ``R_lb`` because ``S_lb`` has a unit
    diagonal.  The equality is checked once per profile.
    """
    _verify_cascaded_blocks(p)
    return block_diag(p.R_ub, *([p.R_lb] * p.K)).astype(np.complex128)


def czz_blocks(p):
    """Diagonal blocks of C_zz as a list: R_ub followed by K copies of R_lb."""
    return [p.R_ub] + [p.R_lb] * p.K
