"""Layer primitives on NHWC tensors: 3x3 'same' convolution, batch norm, ReLU.

Every forward function returns ``(out, cache)``; the matching backward
function consumes the cache.  Arithmetic follows the dtype of the
parameters, so the same code serves float32 training and float64
gradient checks.
"""

import numpy as np

from ..errors import ShapeMismatch

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _pad(x):
    B, H, W, C = x.shape
    xp = np.zeros((B, H + 2, W + 2, C), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    return xp


def im2col(x):
    """``(B, H, W, C) -> (B, H, W, 9C)`` with patch order (di, dj, c)."""
    B, H, W, C = x.shape
    win = np.lib.stride_tricks.sliding_window_view(_pad(x), (3, 3), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B, H, W, 9 * C)


def col2im(cols, C):
    """Adjoint of :func:`im2col`: scatter-add patches back onto the image."""
    B, H, W, _ = cols.shape
    xp = np.zeros((B, H + 2, W + 2, C), dtype=cols.dtype)
    idx = 0
    for di in range(3):
        for dj in range(3):
            xp[:, di:di + H, dj:dj + W, :] += cols[..., idx * C:(idx + 1) * C]
            idx += 1
    return xp[:, 1:-1, 1:-1, :]


def conv2d_forward(x, kernel, bias):
    if kernel.shape[:2] != (3, 3):
        raise ShapeMismatch(f"kernel must be 3x3, got {kernel.shape[:2]}")
    c_in, c_out = kernel.shape[2:]
    if x.shape[-1] != c_in:
        raise ShapeMismatch(f"input has {x.shape[-1]} channels, kernel expects {c_in}")
    cols = im2col(x)
    out = cols @ kernel.reshape(9 * c_in, c_out) + bias
    return out, cols


def conv2d_same(x, kernel, bias):
    """Stride-1, zero-padded 3x3 convolution (cross-correlation)."""
    return conv2d_forward(x, kernel, bias)[0]


def conv2d_backward(dout, cols, kernel):
    c_in, c_out = kernel.shape[2:]
    dk = (cols.reshape(-1, 9 * c_in).T @ dout.reshape(-1, c_out)).reshape(kernel.shape)
    db = dout.sum(axis=(0, 1, 2))
    # The input gradient is a 'same' correlation of dout with the
    # spatially flipped, channel-transposed kernel.
    flipped = kernel[::-1, ::-1].transpose(0, 1, 3, 2).reshape(9 * c_out, c_in)
    dx = im2col(dout) @ flipped
    return dx, dk, db


def batch_norm_forward(x, gamma, beta, running_mean, running_var, mode):
    """Per-channel normalization over (batch, height, width).

    In ``train`` mode the batch statistics are returned in the cache under
    ``"mean"``/``"var"`` so the caller can update the running averages.
    """
    if mode == "train":
        mean = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
    elif mode == "infer":
        mean, var = running_mean, running_var
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(BN_EPS))
    xhat = (x - mean) * inv_std
    out = gamma * xhat + beta
    return out, {"xhat": xhat, "inv_std": inv_std, "mean": mean, "var": var, "mode": mode}


def batch_norm(x, record, mode="infer"):
    out, _ = batch_norm_forward(x, record.gamma, record.beta,
                                record.running_mean, record.running_var, mode)
    return out


def batch_norm_backward(dout, cache, gamma):
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    dgamma = (dout * xhat).sum(axis=(0, 1, 2))
    dbeta = dout.sum(axis=(0, 1, 2))
    dxhat = dout * gamma
    if cache["mode"] == "infer":
        return dxhat * inv_std, dgamma, dbeta
    n = xhat.shape[0] * xhat.shape[1] * xhat.shape[2]
    dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=(0, 1, 2))
                          - xhat * (dxhat * xhat).sum(axis=(0, 1, 2)))
    return dx, dgamma, dbeta


def update_running(running, batch, momentum=BN_MOMENTUM):
    return momentum * running + (1.0 - momentum) * batch


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask
