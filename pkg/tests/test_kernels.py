import numpy as np
import pytest

from tdde import kernels
from tdde.kernels import JIT_KERNELS, NUMPY_KERNELS

pytestmark = pytest.mark.skipif(JIT_KERNELS["softmin_rows"] is None,
                                reason="numba route disabled")


def test_softmin_routes_agree():
    rng = np.random.default_rng(0)
    C = rng.uniform(0, 4, (37, 23))
    for eps in (1.0, 0.01):
        h = rng.standard_normal(23)
        a = NUMPY_KERNELS["softmin_rows"](C, h, eps)
        b = JIT_KERNELS["softmin_rows"](C, h, eps)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        h = rng.standard_normal(37)
        a = NUMPY_KERNELS["softmin_cols"](C, h, eps)
        b = JIT_KERNELS["softmin_cols"](C, h, eps)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_softmin_matches_definition():
    rng = np.random.default_rng(1)
    C = rng.uniform(0, 1, (5, 4))
    h = rng.standard_normal(4)
    ref = -0.5 * np.log(np.exp((h[None] - C) / 0.5).sum(1))
    assert np.allclose(kernels.softmin_rows(C, h, 0.5), ref)


def test_kde_routes_agree():
    rng = np.random.default_rng(2)
    data = rng.standard_normal((300, 3))
    q = rng.standard_normal((700, 3)) * 3
    inv_h = np.array([2.0, 3.0, 1.5])
    a = NUMPY_KERNELS["kde_logsumexp"](q, data, inv_h)
    b = JIT_KERNELS["kde_logsumexp"](q, data, inv_h)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-10)


def test_oscillator_routes_agree():
    rng = np.random.default_rng(3)
    steps = np.array([0, 5, 40], dtype=np.int64)
    x0 = rng.standard_normal((64, 2))
    noise = 0.05 * rng.standard_normal((40, 64))
    args = (x0, noise, steps, 0.01, 0.25, 1.0, 1.0)
    assert np.allclose(NUMPY_KERNELS["duffing_paths"](*args), JIT_KERNELS["duffing_paths"](*args),
                       rtol=1e-12, atol=1e-12)
    x0 = rng.standard_normal((64, 3))
    args = (x0, noise, steps, 0.01, 0.05, 1.0, 0.01, 1.0, 1.0, 1.5, 1.0)
    assert np.allclose(NUMPY_KERNELS["bouc_wen_paths"](*args), JIT_KERNELS["bouc_wen_paths"](*args),
                       rtol=1e-12, atol=1e-12)
