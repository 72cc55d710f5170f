"""Pure-numpy versions of the fused kernels in ``_kernels.pyx``.

Signatures and return conventions match the compiled module exactly so
``kernels`` can swap one for the other.
"""
import numpy as np


def softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(y, dy):
    dot = (y * dy).sum(axis=1, keepdims=True)
    return y * (dy - dot)


def layer_norm_forward(x, gain, bias, eps):
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    var = (centered * centered).mean(axis=1)
    rstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    y = centered * rstd[:, None] * gain + bias
    return y.astype(x.dtype), mean.astype(x.dtype), rstd


def layer_norm_backward(dy, x, mean, rstd, gain):
    xhat = (x - mean[:, None]) * rstd[:, None]
    g = dy * gain
    m = x.shape[1]
    s1 = g.sum(axis=1, keepdims=True) / m
    s2 = (g * xhat).sum(axis=1, keepdims=True) / m
    dx = rstd[:, None] * (g - s1 - xhat * s2)
    return dx.astype(x.dtype), (dy * xhat).sum(axis=0), dy.sum(axis=0)


def smoothed_cross_entropy(logits, targets, weights, smoothing):
    n, v = logits.shape
    mx = logits.max(axis=1, keepdims=True)
    lse = mx + np.log(np.exp(logits - mx).sum(axis=1, keepdims=True))
    logp = logits - lse
    rows = np.arange(n)
    keep = 1.0 - smoothing
    per_row = -keep * logp[rows, targets] - (smoothing / v) * logp.sum(axis=1)
    total = float(np.dot(weights.astype(np.float64), per_row.astype(np.float64)))
    grad = np.exp(logp) - smoothing / v
    grad[rows, targets] -= keep
    grad *= weights[:, None]
    return total, grad.astype(logits.dtype)


def scatter_add_rows(out, index, src):
    np.add.at(out, index, src)
