import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdde.classifier import make_model
from tdde.density import (
    DensityModel,
    kl_estimates,
    log_density_at,
    log_density_at_knot,
    log_density_data,
    pairwise_sum,
    score,
)
from tdde.timegrid import LatentDensity, make_grid


def zeroed(m):
    for layer in m.net.layers:
        layer.weight[:] = 0.0
        layer.bias[:] = 0.0
    return m


def const_model(n_dim, c):
    m = zeroed(make_model(n_dim, hidden=(4,), seed=0))
    m.net.layers[-1].bias[:] = c
    return m


@pytest.fixture
def dm():
    m = make_model(2, hidden=(16, 16), activation="silu", embedding="fourier", n_freq=3, seed=3)
    return DensityModel(m, make_grid("log", 6, t_min=0.02), LatentDensity.std_normal(2))


X = np.random.default_rng(0).standard_normal((7, 2))


def test_knot_zero_is_base(dm):
    assert np.array_equal(log_density_at_knot(dm, X, 0), dm.base.logpdf(X))


def test_zero_net_keeps_base():
    dmz = DensityModel(zeroed(make_model(2, hidden=(8,))), make_grid("linear", 5), LatentDensity.std_normal(2))
    for k in range(6):
        assert np.array_equal(log_density_at_knot(dmz, X, k), dmz.base.logpdf(X))
    np.testing.assert_array_equal(score(dmz, X), -X)
    assert kl_estimates(dmz, X, X, 5) == (0.0, 0.0)


def test_telescoping_increment(dm):
    f = dm.model.f
    for k in range(1, dm.grid.N + 1):
        diff = log_density_at_knot(dm, X, k) - log_density_at_knot(dm, X, k - 1)
        want = f(X, dm.grid.midpoints[k - 1]) * dm.grid.dt[k - 1]
        np.testing.assert_allclose(diff, want, rtol=0, atol=1e-13)


def test_off_knot_equals_knot_bitwise(dm):
    for k, t in enumerate(dm.grid.times):
        assert np.array_equal(log_density_at(dm, X, t), log_density_at_knot(dm, X, k))


def test_data_density_is_last_knot(dm):
    assert np.array_equal(log_density_data(dm, X), log_density_at_knot(dm, X, dm.grid.N))


def test_constant_f_hand_computation():
    c = 2.0
    dmc = DensityModel(const_model(1, c), make_grid("explicit", times=[0.0, 0.4, 1.0]), LatentDensity.std_normal(1))
    x = np.array([[0.3]])
    base = dmc.base.logpdf(x)[0]
    assert log_density_at(dmc, x, 0.2)[0] == pytest.approx(base + c * 0.2, abs=1e-14)
    assert log_density_at(dmc, x, 0.7)[0] == pytest.approx(base + c * 0.4 + c * 0.3, abs=1e-14)
    # midway: average of the two knot values when f is constant on the interval
    mid = log_density_at(dmc, x, 0.7)[0]
    ends = 0.5 * (log_density_at_knot(dmc, x, 1)[0] + log_density_at_knot(dmc, x, 2)[0])
    assert mid == pytest.approx(ends, abs=1e-14)


def test_argument_errors(dm):
    with pytest.raises(IndexError):
        log_density_at_knot(dm, X, dm.grid.N + 1)
    with pytest.raises(ValueError):
        log_density_at(dm, X, 1.5)
    with pytest.raises(ValueError):
        kl_estimates(dm, np.zeros((0, 2)), X, 1)


@pytest.mark.parametrize("t", [1.0, 0.37, 0.02, 0.0])
def test_score_is_gradient(dm, t):
    g = score(dm, X, t)
    h = 1e-6
    fd = np.empty_like(X)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd[:, i] = (log_density_at(dm, X + e, t) - log_density_at(dm, X - e, t)) / (2 * h)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5


def test_single_point_api(dm):
    v = log_density_at(dm, X[0], 0.5)
    assert isinstance(v, float) and v == log_density_at(dm, X[:1], 0.5)[0]
    assert score(dm, X[0]).shape == (2,)


def test_chunked_evaluation_matches(dm, monkeypatch):
    import tdde.density as dens
    full = log_density_at(dm, X, 0.5)
    monkeypatch.setattr(dens, "CHUNK_ROWS", 7)
    # smaller BLAS blocks may round differently in the last bit
    np.testing.assert_allclose(log_density_at(dm, X, 0.5), full, rtol=1e-14, atol=1e-14)


@given(st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=40))
def test_pairwise_sum(vals):
    arr = np.array(vals, dtype=np.float64).reshape(-1, 1)
    got = pairwise_sum(arr)
    want = np.array([np.sum(np.array(vals, dtype=np.longdouble))], dtype=np.float64) if vals else np.zeros(1)
    assert np.allclose(got, want, atol=1e-9)


def test_kl_signs_for_constant_rate():
    dmc = DensityModel(const_model(1, -0.5), make_grid("linear", 4), LatentDensity.std_normal(1))
    S = np.random.default_rng(1).standard_normal((10, 1))
    fwd, rev = kl_estimates(dmc, S, S, 4)
    assert fwd == pytest.approx(0.5) and rev == pytest.approx(-0.5)
