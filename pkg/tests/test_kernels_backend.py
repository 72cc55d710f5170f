import subprocess
import sys

import numpy as np
import pytest

from tdomt.numerics import _reference, kernels

compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")


def _impls():
    from tdomt.numerics import _kernels

    return _kernels, _reference


@compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_agree(dtype):
    fast, ref = _impls()
    rng = np.random.default_rng(0)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    x = rng.normal(size=(7, 9)).astype(dtype)
    dy = rng.normal(size=(7, 9)).astype(dtype)
    y = fast.softmax_rows(x)
    np.testing.assert_allclose(y, ref.softmax_rows(x), atol=tol)
    np.testing.assert_allclose(fast.softmax_rows_backward(y, dy), ref.softmax_rows_backward(y, dy), atol=tol)

    gain = rng.normal(size=9).astype(dtype)
    bias = rng.normal(size=9).astype(dtype)
    a, b = fast.layer_norm_forward(x, gain, bias, 1e-5), ref.layer_norm_forward(x, gain, bias, 1e-5)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, atol=tol * 10)
    _, mean, rstd = a
    for u, v in zip(fast.layer_norm_backward(dy, x, mean, rstd, gain), ref.layer_norm_backward(dy, x, mean, rstd, gain)):
        np.testing.assert_allclose(u, v, atol=tol * 10)

    targets = rng.integers(0, 9, size=7).astype(np.int64)
    weights = (rng.random(7) > 0.3).astype(dtype)
    la, ga = fast.smoothed_cross_entropy(x, targets, weights, 0.1)
    lb, gb = ref.smoothed_cross_entropy(x, targets, weights, 0.1)
    assert la == pytest.approx(lb, rel=tol * 10)
    np.testing.assert_allclose(ga, gb, atol=tol)

    out_a = np.zeros((4, 9), dtype)
    out_b = np.zeros((4, 9), dtype)
    idx = np.array([0, 3, 3, 1, 0, 2, 3], dtype=np.int64)
    fast.scatter_add_rows(out_a, idx, x)
    ref.scatter_add_rows(out_b, idx, x)
    np.testing.assert_allclose(out_a, out_b, atol=tol)


@compiled
def test_use_backend_switches_implementation():
    x = np.random.default_rng(1).normal(size=(3, 4))
    try:
        kernels.use_backend("numpy")
        assert kernels.BACKEND == "numpy"
        a = kernels.softmax_lastaxis(x)
        kernels.use_backend("cython")
        b = kernels.softmax_lastaxis(x)
    finally:
        kernels.use_backend("cython")
    np.testing.assert_allclose(a, b, atol=1e-12)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_environment_forces_pure_python():
    code = "from tdomt.numerics import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"TDOMT_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
