"""Central finite-difference gradient checking."""
import numpy as np


def numeric_grad(param, loss_fn, h=1e-5):
    """Central differences of the scalar ``loss_fn()`` w.r.t. ``param.data``."""
    data = param.data
    g = np.zeros_like(data, dtype=np.float64)
    flat = data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = float(loss_fn())
        flat[i] = old - h
        down = float(loss_fn())
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def relative_error(analytic, numeric):
    """Norm-wise relative error ``|a - n| / (|a| + |n|)``; 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def gradients_match(analytic, numeric, rtol=1e-4, atol=1e-7):
    """Relative error below ``rtol``, or every entry within ``atol``.

    The absolute branch covers gradients that vanish identically (attention
    key biases: softmax ignores a per-row shift), where both sides are pure
    round-off and the relative error is meaningless.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if relative_error(a, n) < rtol:
        return True
    return bool(np.max(np.abs(a - n), initial=0.0) < atol)
