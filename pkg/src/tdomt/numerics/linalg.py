"""SVD and regularized CCA used by the representation analysis."""
import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError


def svd(a):
    """Thin SVD ``a = U @ diag(s) @ Vt`` with a deterministic sign convention.

    Singular values are nonincreasing.  For each component the largest-magnitude
    entry of the left singular vector is made positive.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"svd expects a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("svd input has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"svd did not converge: {exc}") from exc
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, s, vt * signs[:, None]


def retained_rank(singular_values, variance=0.99):
    """Smallest k whose leading singular directions explain ``variance`` of the energy."""
    energy = np.asarray(singular_values, dtype=np.float64) ** 2
    totals = energy.sum()
    if totals <= 0:
        return 0
    frac = np.cumsum(energy) / totals
    return int(np.searchsorted(frac, variance - 1e-12) + 1)


def _regularize(cov, rel_eps):
    p = cov.shape[0]
    eps = rel_eps * np.trace(cov) / p
    return cov + eps * np.eye(p)


def _inv_sqrt(cov):
    w, v = np.linalg.eigh(cov)
    if np.any(w <= 0):
        raise ConvergenceError("covariance is rank deficient beyond regularization")
    return (v / np.sqrt(w)) @ v.T


def cca(x, y, top_k=None, rel_eps=1e-8):
    """Canonical correlation analysis between sample-aligned matrices.

    Returns ``(wx, wy, corr)`` where ``wx`` is (k, p) and ``wy`` is (k, q);
    the canonical variates are ``(x - x.mean(0)) @ wx.T`` and likewise for y.
    Each covariance gets ``rel_eps * trace/p`` added to its diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"cca needs sample-aligned matrices, got {x.shape} and {y.shape}")
    s, p = x.shape
    q = y.shape[1]
    if s <= max(p, q):
        raise DimensionError(f"cca needs more samples than dimensions (s={s}, p={p}, q={q})")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sxx = _regularize(xc.T @ xc / (s - 1), rel_eps)
    syy = _regularize(yc.T @ yc / (s - 1), rel_eps)
    sxy = xc.T @ yc / (s - 1)
    if np.trace(sxx) <= 0 or np.trace(syy) <= 0:
        raise ConvergenceError("cca input has zero variance")
    ix, iy = _inv_sqrt(sxx), _inv_sqrt(syy)
    u, corr, vt = svd(ix @ sxy @ iy)
    k = min(p, q) if top_k is None else min(top_k, p, q)
    wx = (ix @ u[:, :k]).T
    wy = (iy @ vt[:k].T).T
    return wx, wy, np.clip(corr[:k], 0.0, 1.0)
