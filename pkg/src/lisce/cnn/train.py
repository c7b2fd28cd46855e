"""Dataset generation, Adam and the early-stopping training loop."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..channel import CorrelationProfile, RngStream, complex_normal, sample_channel
from ..errors import DivergenceError
from ..estimation import _ls_matrix, build_measurement, sigma2_from_snr_db
from ..pilots import dft_phase_matrix
from .network import apply_bn_stats, forward, forward_backward, init_weights, to_image

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 100
    patience: int = 5
    max_epochs: int = 200
    improvement_delta: float = 1e-5

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass
class AdamState:
    m: list
    v: list

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(w, grads, state, t, cfg):
    """One bias-corrected Adam update (``t`` starts at 1).  Updates in place."""
    dt = w.dtype.type
    b1, b2 = dt(cfg.beta1), dt(cfg.beta2)
    lr, eps = dt(cfg.learning_rate), dt(cfg.adam_epsilon)
    c1 = dt(1.0 - cfg.beta1 ** t)
    c2 = dt(1.0 - cfg.beta2 ** t)
    for p, g, m, v in zip(w.params(), grads, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return w, state


@dataclass(frozen=True)
class DatasetSpec:
    profile: CorrelationProfile
    snr_db_list: tuple = (0.0,)
    sizes: tuple = (16000, 8000, 6000)
    seed: int = 0
    T_p: int = None

    def __post_init__(self):
        if len(self.sizes) != 3 or min(self.sizes) < 1:
            raise ValueError("sizes must be three positive counts (train, val, test)")
        if not self.snr_db_list:
            raise ValueError("snr_db_list must not be empty")

    @property
    def pilot_length(self):
        return self.T_p if self.T_p is not None else self.profile.K + 1


@dataclass
class Split:
    inputs: np.ndarray   # (N, M, K+1, 2) float32 LS images
    targets: np.ndarray  # (N, M, K+1, 2) float32 true channels
    sigma: np.ndarray    # (N,) float32 noise std per sample
    snr_db: np.ndarray   # (N,) float32

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, mask):
        return Split(self.inputs[mask], self.targets[mask], self.sigma[mask], self.snr_db[mask])


@dataclass
class Dataset:
    M: int
    K: int
    T_p: int
    splits: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.splits[name]


def generate_split(profile, snr_db_list, count, T_p, rng):
    """LS-image / clean-image pairs; SNRs assigned round-robin by sample index."""
    phi = dft_phase_matrix(T_p, profile.K)
    m = build_measurement(phi, sigma2=1.0, M=profile.M)
    F = _ls_matrix(m)
    snrs = np.array([snr_db_list[i % len(snr_db_list)] for i in range(count)], dtype=float)
    sig2 = np.array([sigma2_from_snr_db(s) for s in snrs])
    Z = np.empty((count, profile.n), dtype=np.complex128)
    Nn = np.empty((count, m.G.shape[0]), dtype=np.complex128)
    for i in range(count):
        gen = rng.child(i).generator()
        Z[i] = sample_channel(profile, gen).z
        Nn[i] = complex_normal(gen, m.G.shape[0], sig2[i])
    Y = Z @ m.G.T + Nn
    Zls = Y @ F.T
    return Split(to_image(Zls, profile.M).astype(np.float32),
                 to_image(Z, profile.M).astype(np.float32),
                 np.sqrt(sig2).astype(np.float32),
                 snrs.astype(np.float32))


def generate_dataset(spec):
    base = RngStream(spec.seed)
    ds = Dataset(spec.profile.M, spec.profile.K, spec.pilot_length)
    for k, (name, count) in enumerate(zip(SPLITS, spec.sizes)):
        ds.splits[name] = generate_split(spec.profile, list(spec.snr_db_list), count,
                                         spec.pilot_length, base.child(1000 + k))
    return ds


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = -1
    best_val: float = float("inf")
    stopped_early: bool = False

    def rows(self):
        return list(self.epochs)


def evaluate_loss(w, split, T_p, chunk=2000):
    """Mean squared Frobenius error with inference-mode batch norm."""
    total = 0.0
    for s in range(0, len(split), chunk):
        sl = slice(s, s + chunk)
        out = forward(w, split.inputs[sl], "infer", split.sigma[sl], T_p)
        total += float(np.sum((out.astype(np.float64) - split.targets[sl]) ** 2))
    return total / len(split)


def train(arch, dataset, cfg=TrainConfig(), rng=RngStream(0), D=8, N_f=4, init=None):
    """Adam training with early stopping on the validation loss.

    Returns the weights from the best validation epoch and the per-epoch log.
    """
    tr, va = dataset["train"], dataset["val"]
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("dataset is empty")
    w = init if init is not None else init_weights(
        arch, D, N_f, dataset.M, dataset.K, rng.child(0))
    state = AdamState.zeros_like(w.params())
    shuffle = rng.child(1)
    best_w = w.copy()
    trace = TrainingLog()
    step = 0
    wait = 0
    for epoch in range(cfg.max_epochs):
        order = shuffle.child(epoch).generator().permutation(len(tr))
        losses = []
        for s in range(0, len(tr), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads, stats = forward_backward(
                w, tr.inputs[idx], tr.targets[idx], tr.sigma[idx], dataset.T_p)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            step += 1
            adam_step(w, grads, state, step, cfg)
            apply_bn_stats(w, stats)
            losses.append(loss * len(idx))
        train_loss = float(np.sum(losses) / len(tr))
        val_loss = evaluate_loss(w, va, dataset.T_p)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        trace.epochs.append((epoch, train_loss, val_loss))
        log.info("%s epoch %d train %.6f val %.6f", arch, epoch, train_loss, val_loss)
        if val_loss < trace.best_val * (1.0 - cfg.improvement_delta):
            trace.best_val, trace.best_epoch = val_loss, epoch
            best_w = w.copy()
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                trace.stopped_early = True
                break
    return best_w, trace
