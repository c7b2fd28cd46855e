"""Central finite-difference checks for the hand-written backward passes."""

import numpy as np

from . import layers as L
from .network import ffdnet_pack, loss_and_grads


def numeric_grads(w, inputs, targets, sigma=None, T_p=None, h=1e-3):
    out = []
    for p in w.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp, _ = loss_and_grads(w, inputs, targets, sigma, T_p)
            p[idx] = old - h
            lm, _ = loss_and_grads(w, inputs, targets, sigma, T_p)
            p[idx] = old
            g[idx] = (lp - lm) / (2.0 * h)
        out.append(g)
    return out


def relative_error(a, b, floor=0.0):
    """``||a - b|| / max(||a||, ||b||, floor)``."""
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def compare_grads(w, inputs, targets, sigma=None, T_p=None, h=1e-3):
    """Per-parameter relative error between analytic and numeric gradients.

    Parameters whose exact gradient vanishes (a conv bias feeding batch
    norm) are measured against a floor of ``1e-6`` times the overall
    gradient norm instead of their own tiny norm.
    """
    _, analytic = loss_and_grads(w, inputs, targets, sigma, T_p)
    numeric = numeric_grads(w, inputs, targets, sigma, T_p, h)
    total = np.sqrt(sum(float(np.sum(g ** 2)) for g in analytic))
    return {name: relative_error(a, n, 1e-6 * total)
            for name, a, n in zip(w.param_names(), analytic, numeric)}


def relu_margin(w, inputs, sigma=None, T_p=None):
    """Smallest ``|pre-activation|`` over every ReLU in a train-mode pass.

    Finite differences are meaningless when a perturbation pushes a unit
    across the ReLU kink; callers use this to reject such test points.
    """
    x = inputs.astype(w.dtype)
    if w.arch == "ffdnet":
        x = ffdnet_pack(x, sigma, T_p)
    margin = np.inf
    last = len(w.layers) - 1
    for i, layer in enumerate(w.layers):
        x, _ = L.conv2d_forward(x, layer.kernel, layer.bias)
        if layer.bn is not None:
            bn = layer.bn
            x, _ = L.batch_norm_forward(x, bn.gamma, bn.beta, bn.running_mean,
                                        bn.running_var, "train")
        if i != last:
            margin = min(margin, float(np.min(np.abs(x))))
            x = np.maximum(x, 0)
    return margin

