"""DnCNN / FFDNet channel denoisers built on :mod:`lisce.cnn.layers`.

Both networks share one layer pattern: conv+ReLU, then ``D-2`` blocks of
conv+BN+ReLU, then a plain conv that predicts the noise, which is
subtracted from the input (residual learning).  FFDNet additionally folds
pairs of antenna rows into channels and appends a constant noise-level
map.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import OddAntennaCount, ShapeMismatch
from . import layers as L

ARCHS = ("dncnn", "ffdnet")
IN_CHANNELS = {"dncnn": 2, "ffdnet": 5}
OUT_CHANNELS = {"dncnn": 2, "ffdnet": 4}


@dataclass
class BatchNormRecord:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class ConvLayer:
    kernel: np.ndarray  # (3, 3, c_in, c_out)
    bias: np.ndarray
    bn: BatchNormRecord = None

    @property
    def c_in(self):
        return self.kernel.shape[2]

    @property
    def c_out(self):
        return self.kernel.shape[3]


@dataclass
class NetworkWeights:
    arch: str
    D: int
    N_f: int
    M: int
    K: int
    layers: list = field(default_factory=list)

    def params(self):
        """Trainable arrays in a fixed order (kernel, bias[, gamma, beta] per layer)."""
        out = []
        for layer in self.layers:
            out += [layer.kernel, layer.bias]
            if layer.bn is not None:
                out += [layer.bn.gamma, layer.bn.beta]
        return out

    def param_names(self):
        names = []
        for i, layer in enumerate(self.layers):
            names += [f"conv{i}.kernel", f"conv{i}.bias"]
            if layer.bn is not None:
                names += [f"bn{i}.gamma", f"bn{i}.beta"]
        return names

    def astype(self, dtype):
        w = copy.deepcopy(self)
        for layer in w.layers:
            layer.kernel = layer.kernel.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
            if layer.bn is not None:
                for name in ("gamma", "beta", "running_mean", "running_var"):
                    setattr(layer.bn, name, getattr(layer.bn, name).astype(dtype))
        return w

    def copy(self):
        return copy.deepcopy(self)

    @property
    def dtype(self):
        return self.layers[0].kernel.dtype


def layer_plan(arch, D, N_f):
    """``[(c_in, c_out, has_bn)]`` for a depth-``D`` network."""
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")
    if D < 2:
        raise ValueError("depth must be at least 2")
    plan = [(IN_CHANNELS[arch], N_f, False)]
    plan += [(N_f, N_f, True)] * (D - 2)
    plan.append((N_f, OUT_CHANNELS[arch], False))
    return plan


def init_weights(arch, D, N_f, M, K, rng, dtype=np.float32, output_scale=0.01):
    """Fan-in scaled Gaussian kernels (variance 2 / (9 c_in)), zero biases.

    The last kernel is further multiplied by ``output_scale`` so that a
    fresh network starts close to the identity map; with a full-size
    output layer the random residual swamps the noise being learned and
    training settles on the identity instead of a denoiser.
    """
    if arch == "ffdnet" and M % 2:
        raise OddAntennaCount(f"FFDNet needs an even antenna count, got M={M}")
    gen = rng.generator() if hasattr(rng, "generator") else rng
    out = []
    plan = layer_plan(arch, D, N_f)
    for i, (c_in, c_out, has_bn) in enumerate(plan):
        std = np.sqrt(2.0 / (9 * c_in))
        if i == len(plan) - 1:
            std *= output_scale
        kernel = (std * gen.standard_normal((3, 3, c_in, c_out))).astype(dtype)
        bn = None
        if has_bn:
            bn = BatchNormRecord(np.ones(c_out, dtype), np.zeros(c_out, dtype),
                                 np.zeros(c_out, dtype), np.ones(c_out, dtype))
        out.append(ConvLayer(kernel, np.zeros(c_out, dtype), bn))
    return NetworkWeights(arch, D, N_f, M, K, out)


def zero_weights(arch, D, N_f, M, K, dtype=np.float32):
    w = init_weights(arch, D, N_f, M, K, np.random.default_rng(0), dtype)
    for layer in w.layers:
        layer.kernel[...] = 0
        layer.bias[...] = 0
        if layer.bn is not None:
            layer.bn.gamma[...] = 0
    return w


# -- image layout -----------------------------------------------------------

def to_image(z_hat, M):
    """Stacked ``z`` (length ``M(K+1)``, optionally batched) to ``(B, M, K+1, 2)``."""
    z_hat = np.asarray(z_hat)
    if z_hat.shape[-1] % M:
        raise ShapeMismatch(f"length {z_hat.shape[-1]} is not a multiple of M={M}")
    zb = z_hat.reshape(-1, z_hat.shape[-1] // M, M).swapaxes(1, 2)  # (B, M, K+1)
    return np.stack([zb.real, zb.imag], axis=-1)


def from_image(img):
    """Inverse of :func:`to_image`; returns ``(B, M(K+1))`` complex."""
    zb = img[..., 0].astype(np.float64) + 1j * img[..., 1].astype(np.float64)
    return zb.swapaxes(1, 2).reshape(img.shape[0], -1)


def noise_level(sigma, T_p):
    """Per-real-component std of the LS noise: ``sigma / sqrt(2 T_p)``."""
    return np.asarray(sigma, dtype=np.float64) / np.sqrt(2.0 * T_p)


def ffdnet_pack(img, sigma, T_p):
    """``(B, M, K+1, 2) -> (B, M/2, K+1, 5)``.

    Channels are (Re even rows, Re odd rows, Im even rows, Im odd rows,
    noise map); ``sigma`` is the noise standard deviation, scalar or per sample.
    """
    B, M, W, _ = img.shape
    if M % 2:
        raise OddAntennaCount(f"FFDNet needs an even antenna count, got M={M}")
    out = np.empty((B, M // 2, W, 5), dtype=img.dtype)
    out[..., 0] = img[:, 0::2, :, 0]
    out[..., 1] = img[:, 1::2, :, 0]
    out[..., 2] = img[:, 0::2, :, 1]
    out[..., 3] = img[:, 1::2, :, 1]
    level = np.broadcast_to(noise_level(sigma, T_p), (B,))
    out[..., 4] = level.astype(img.dtype)[:, None, None]
    return out


def ffdnet_unpack(packed):
    """Inverse of :func:`ffdnet_pack` on the four data channels."""
    B, Mh, W, _ = packed.shape
    img = np.empty((B, 2 * Mh, W, 2), dtype=packed.dtype)
    img[:, 0::2, :, 0] = packed[..., 0]
    img[:, 1::2, :, 0] = packed[..., 1]
    img[:, 0::2, :, 1] = packed[..., 2]
    img[:, 1::2, :, 1] = packed[..., 3]
    return img


# -- forward / backward -----------------------------------------------------

def _body_forward(w, x, mode):
    caches = []
    h = x
    last = len(w.layers) - 1
    for i, layer in enumerate(w.layers):
        h, cols = L.conv2d_forward(h, layer.kernel, layer.bias)
        bn_cache = relu_mask = None
        if layer.bn is not None:
            bn = layer.bn
            h, bn_cache = L.batch_norm_forward(h, bn.gamma, bn.beta,
                                               bn.running_mean, bn.running_var, mode)
        if i != last:
            h, relu_mask = L.relu_forward(h)
        caches.append((cols, bn_cache, relu_mask))
    return h, caches


def _body_backward(w, dout, caches):
    grads = []
    dh = dout
    for layer, (cols, bn_cache, relu_mask) in zip(reversed(w.layers), reversed(caches)):
        g = []
        if relu_mask is not None:
            dh = L.relu_backward(dh, relu_mask)
        if bn_cache is not None:
            dh, dgamma, dbeta = L.batch_norm_backward(dh, bn_cache, layer.bn.gamma)
            g = [dgamma, dbeta]
        dh, dk, db = L.conv2d_backward(dh, cols, layer.kernel)
        grads = [dk, db] + g + grads
    return grads


def _check_input(w, img):
    if img.ndim != 4 or img.shape[-1] != 2:
        raise ShapeMismatch(f"expected a (B, M, K+1, 2) image, got {img.shape}")


def _forward(w, img, mode, sigma=None, T_p=None):
    """Network output plus whatever the backward pass needs."""
    _check_input(w, img)
    img = img.astype(w.dtype, copy=False)
    if w.arch == "dncnn":
        res, caches = _body_forward(w, img, mode)
        return img - res, caches
    if sigma is None or T_p is None:
        raise ValueError("FFDNet needs the noise level (sigma, T_p)")
    packed = ffdnet_pack(img, sigma, T_p)
    res, caches = _body_forward(w, packed, mode)
    return ffdnet_unpack(packed[..., :4] - res), caches


def dncnn_forward(img, w, mode="infer"):
    if w.arch != "dncnn":
        raise ValueError(f"weights are for {w.arch}")
    return _forward(w, img, mode)[0]


def ffdnet_forward(img, noise_sigma, T_p, w, mode="infer"):
    if w.arch != "ffdnet":
        raise ValueError(f"weights are for {w.arch}")
    return _forward(w, img, mode, noise_sigma, T_p)[0]


def forward(w, img, mode="infer", sigma=None, T_p=None):
    return _forward(w, img, mode, sigma, T_p)[0]


def forward_backward(w, inputs, targets, sigma=None, T_p=None, mode="train"):
    """Loss, parameter gradients and per-layer BN batch statistics."""
    out, caches = _forward(w, inputs, mode, sigma, T_p)
    targets = targets.astype(out.dtype, copy=False)
    diff = out - targets
    n = inputs.shape[0]
    loss = float(np.sum(diff.astype(np.float64) ** 2) / n)
    dout = (2.0 / n) * diff
    # out = input - residual, so the residual gradient is -dout.
    dres = -dout if w.arch == "dncnn" else -ffdnet_pack(dout, 0.0, 1)[..., :4]
    grads = _body_backward(w, dres, caches)
    stats = [(c[1]["mean"], c[1]["var"]) if c[1] is not None else None for c in caches]
    return loss, grads, stats


def loss_and_grads(w, inputs, targets, sigma=None, T_p=None, mode="train"):
    """Mean squared Frobenius error over the batch and its gradients.

    Gradients come back in the order of :meth:`NetworkWeights.params`.
    Running BN statistics are left untouched.
    """
    loss, grads, _ = forward_backward(w, inputs, targets, sigma, T_p, mode)
    return loss, grads


def apply_bn_stats(w, stats):
    for layer, st in zip(w.layers, stats):
        if st is not None and layer.bn is not None:
            mean, var = st
            layer.bn.running_mean = L.update_running(layer.bn.running_mean, mean).astype(w.dtype)
            layer.bn.running_var = L.update_running(layer.bn.running_var, var).astype(w.dtype)


def cnn_estimate(w, z_ls, M, sigma2=None, T_p=None, chunk=1000):
    """Denoise stacked LS estimates (one per row) and return complex estimates."""
    z_ls = np.atleast_2d(z_ls)
    sigma = None if sigma2 is None else np.sqrt(sigma2)
    out = []
    for start in range(0, z_ls.shape[0], chunk):
        img = to_image(z_ls[start:start + chunk], M).astype(w.dtype)
        out.append(from_image(forward(w, img, "infer", sigma, T_p)))
    return np.concatenate(out, axis=0)
