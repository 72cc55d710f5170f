# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused row-wise kernels for the tensor layer.

Every kernel works on C-contiguous 2-D arrays (rows x features); callers
reshape higher-rank tensors before dispatching.  Reductions run in double
precision regardless of the storage type.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, INFINITY

cnp.import_array()

ctypedef fused real:
    float
    double


def softmax_rows(real[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out_arr = np.empty((n, m), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] out = out_arr
    cdef double mx, s, e
    with nogil:
        for i in range(n):
            mx = -INFINITY
            for j in range(m):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(m):
                e = exp(x[i, j] - mx)
                out[i, j] = <real>e
                s += e
            for j in range(m):
                out[i, j] = <real>(out[i, j] / s)
    return out_arr


def softmax_rows_backward(real[:, ::1] y, real[:, ::1] dy):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    out_arr = np.empty((n, m), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] dx = out_arr
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(m):
                dot += y[i, j] * dy[i, j]
            for j in range(m):
                dx[i, j] = <real>(y[i, j] * (dy[i, j] - dot))
    return out_arr


def layer_norm_forward(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    y_arr = np.empty((n, m), dtype=dt)
    mean_arr = np.empty(n, dtype=dt)
    rstd_arr = np.empty(n, dtype=dt)
    cdef real[:, ::1] y = y_arr
    cdef real[::1] mean = mean_arr
    cdef real[::1] rstd = rstd_arr
    cdef double mu, var, d, r
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(m):
                mu += x[i, j]
            mu /= m
            var = 0.0
            for j in range(m):
                d = x[i, j] - mu
                var += d * d
            var /= m
            r = 1.0 / sqrt(var + eps)
            mean[i] = <real>mu
            rstd[i] = <real>r
            for j in range(m):
                y[i, j] = <real>((x[i, j] - mu) * r * gain[j] + bias[j])
    return y_arr, mean_arr, rstd_arr


def layer_norm_backward(real[:, ::1] dy, real[:, ::1] x, real[::1] mean,
                        real[::1] rstd, real[::1] gain):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    dx_arr = np.empty((n, m), dtype=dt)
    dg_acc = np.zeros(m, dtype=np.float64)
    db_acc = np.zeros(m, dtype=np.float64)
    cdef real[:, ::1] dx = dx_arr
    cdef double[::1] dg = dg_acc
    cdef double[::1] db = db_acc
    cdef double xhat, g, s1, s2, r, mu
    with nogil:
        for i in range(n):
            r = rstd[i]
            mu = mean[i]
            s1 = 0.0
            s2 = 0.0
            for j in range(m):
                xhat = (x[i, j] - mu) * r
                g = dy[i, j] * gain[j]
                s1 += g
                s2 += g * xhat
                dg[j] += dy[i, j] * xhat
                db[j] += dy[i, j]
            s1 /= m
            s2 /= m
            for j in range(m):
                xhat = (x[i, j] - mu) * r
                dx[i, j] = <real>(r * (dy[i, j] * gain[j] - s1 - xhat * s2))
    return dx_arr, dg_acc.astype(dt), db_acc.astype(dt)


def smoothed_cross_entropy(real[:, ::1] logits, cnp.int64_t[::1] targets,
                           real[::1] weights, double smoothing):
    """Weighted label-smoothed cross-entropy summed over rows, plus its gradient."""
    cdef Py_ssize_t n = logits.shape[0], v = logits.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    grad_arr = np.zeros((n, v), dtype=dt)
    cdef real[:, ::1] grad = grad_arr
    cdef double mx, s, lse, w, e, inv, total = 0.0, row, sumx, uni = smoothing / v
    cdef double keep = 1.0 - smoothing
    cdef cnp.int64_t t
    with nogil:
        for i in range(n):
            w = weights[i]
            if w == 0.0:
                continue
            t = targets[i]
            mx = -INFINITY
            for j in range(v):
                if logits[i, j] > mx:
                    mx = logits[i, j]
            s = 0.0
            sumx = 0.0
            for j in range(v):
                e = exp(logits[i, j] - mx)
                grad[i, j] = <real>e
                s += e
                sumx += logits[i, j]
            lse = mx + log(s)
            inv = w / s
            for j in range(v):
                grad[i, j] = <real>(inv * grad[i, j] - w * uni)
            grad[i, t] = <real>(grad[i, t] - w * keep)
            row = -keep * (logits[i, t] - lse) - uni * (sumx - v * lse)
            total += w * row
    return total, grad_arr


def scatter_add_rows(real[:, ::1] out, cnp.int64_t[::1] index, real[:, ::1] src):
    """out[index[i]] += src[i], sequentially (deterministic order)."""
    cdef Py_ssize_t n = src.shape[0], m = src.shape[1], i, j
    cdef cnp.int64_t r
    with nogil:
        for i in range(n):
            r = index[i]
            for j in range(m):
                out[r, j] += src[i, j]
