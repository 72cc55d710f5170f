"""Kernel dispatch: compiled Cython core when importable, numpy otherwise.

Set ``TDOMT_PURE_PYTHON=1`` to force the numpy path (used by the
benchmark and by the backend-agreement tests).
"""
import os

import numpy as np

from . import _reference

_compiled = None
if not os.environ.get("TDOMT_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _reference


def use_backend(name):
    """Switch kernel implementation at runtime ("cython" or "numpy")."""
    global _impl, BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        _impl = _compiled
    elif name == "numpy":
        _impl = _reference
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def compiled_available():
    return _compiled is not None


def _rows(a):
    return np.ascontiguousarray(a.reshape(-1, a.shape[-1]))


def softmax_lastaxis(x):
    return _impl.softmax_rows(_rows(x)).reshape(x.shape)


def softmax_lastaxis_backward(y, dy):
    return _impl.softmax_rows_backward(_rows(y), _rows(dy.astype(y.dtype, copy=False))).reshape(y.shape)


def layer_norm_forward(x, gain, bias, eps):
    y, mean, rstd = _impl.layer_norm_forward(
        _rows(x), np.ascontiguousarray(gain, dtype=x.dtype), np.ascontiguousarray(bias, dtype=x.dtype), float(eps)
    )
    return y.reshape(x.shape), mean, rstd


def layer_norm_backward(dy, x, mean, rstd, gain):
    dx, dg, db = _impl.layer_norm_backward(
        _rows(dy.astype(x.dtype, copy=False)), _rows(x), mean, rstd, np.ascontiguousarray(gain, dtype=x.dtype)
    )
    return dx.reshape(x.shape), dg.astype(x.dtype), db.astype(x.dtype)


def smoothed_cross_entropy(logits, targets, weights, smoothing):
    """Return (weighted loss sum as float, gradient w.r.t. logits)."""
    logits2 = np.ascontiguousarray(logits)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=logits.dtype)
    return _impl.smoothed_cross_entropy(logits2, targets, weights, float(smoothing))


def scatter_add_rows(out, index, src):
    _impl.scatter_add_rows(out, np.ascontiguousarray(index, dtype=np.int64), _rows(src.astype(out.dtype, copy=False)))
