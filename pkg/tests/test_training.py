import numpy as np
import pytest

from tdde.classifier import make_model
from tdde.diffcore import TrainingError
from tdde.simdata import PathDataset
from tdde.timegrid import LatentDensity, make_grid
from tdde.training import (
    StaticSource,
    TrainConfig,
    _logit_grad,
    brier_loss,
    log_loss,
    ml_train,
    nu_weighted_loss,
    train,
)


def fd_check(fn, d_prev, d_next, h=1e-7):
    _, gp, gn = fn(d_prev, d_next)
    for arr, g in ((d_prev, gp), (d_next, gn)):
        fd = np.empty_like(arr)
        for i in range(arr.size):
            old = arr[i]
            arr[i] = old + h
            lp = fn(d_prev, d_next)[0]
            arr[i] = old - h
            lm = fn(d_prev, d_next)[0]
            arr[i] = old
            fd[i] = (lp - lm) / (2 * h)
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-6


def test_brier_values():
    half = np.full(10, 0.5)
    assert brier_loss(half, half)[0] == 0.25
    assert brier_loss(np.full(4, 1e-9), np.full(4, 1 - 1e-9))[0] < 1e-16


def test_log_values():
    half = np.full(10, 0.5)
    assert log_loss(half, half)[0] == pytest.approx(np.log(2), abs=1e-15)
    tiny = np.full(3, 1e-300)
    # d_next -> 0 is clamped at -log(1e-12) for that side
    assert log_loss(tiny, tiny)[0] == pytest.approx(-np.log(1e-12) / 2, rel=1e-12)


@pytest.mark.parametrize("fn", [brier_loss, log_loss,
                                lambda a, b: nu_weighted_loss(a, b, 2.5),
                                lambda a, b: nu_weighted_loss(a, b, 0.3, "log")])
def test_loss_gradients(fn):
    rng = np.random.default_rng(0)
    fd_check(fn, rng.uniform(0.05, 0.95, 7), rng.uniform(0.05, 0.95, 7))


def test_losses_reject_out_of_range():
    with pytest.raises(ValueError):
        brier_loss(np.array([0.0]), np.array([0.5]))
    with pytest.raises(ValueError):
        log_loss(np.array([0.5]), np.array([1.0]))
    with pytest.raises(ValueError):
        nu_weighted_loss(np.array([0.5]), np.array([0.5]), 0.0)


def test_nu_one_is_bitwise_base():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0.01, 0.99, 9), rng.uniform(0.01, 0.99, 9)
    for score, fn in (("brier", brier_loss), ("log", log_loss)):
        got, want = nu_weighted_loss(a, b, 1.0, score), fn(a, b)
        assert got[0] == want[0]
        assert np.array_equal(got[1], want[1]) and np.array_equal(got[2], want[2])


def test_nu_two_hand_value():
    half = np.full(5, 0.5)
    assert nu_weighted_loss(half, half, 2.0)[0] == pytest.approx(0.25, abs=1e-15)


def test_nu_weighted_optimum_on_known_gaussians():
    # pointwise minimizer of rho_prev c0(d) + nu rho_next c1(d) by grid search
    from scipy.stats import norm
    nu = 3.0
    d = np.linspace(1e-4, 1 - 1e-4, 20001)
    for x in np.linspace(-2, 2, 9):
        rp, rn = norm.pdf(x, 0, 1), norm.pdf(x, 0.5, 1)
        for score in ("brier", "log"):
            cost = [rp * nu_weighted_loss(np.array([v]), np.array([0.5]), nu, score)[0]
                    + rn * nu_weighted_loss(np.array([0.5]), np.array([v]), nu, score)[0] for v in d[::50]]
            best = d[::50][int(np.argmin(cost))]
            assert abs((1 - best) - rp / (rp + nu * rn)) < 0.05


def test_logit_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    y = rng.normal(0, 3, 12)
    dt, log_nu = 0.2, np.log(1.7)

    def loss_fn(a, b):
        return nu_weighted_loss(a, b, 1.7, "log")

    _, g = _logit_grad(y, dt, log_nu, loss_fn, 6)
    h = 1e-6
    for i in range(12):
        yp, ym = y.copy(), y.copy()
        yp[i] += h
        ym[i] -= h
        fd = (_logit_grad(yp, dt, log_nu, loss_fn, 6)[0] - _logit_grad(ym, dt, log_nu, loss_fn, 6)[0]) / (2 * h)
        assert abs(g[i] - fd) < 1e-6 * max(1.0, abs(fd))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(score="hinge")
    with pytest.raises(ValueError):
        TrainConfig(nu=0)
    with pytest.raises(ValueError):
        TrainConfig(weight_decay=-1)


def _gauss_pair(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    return PathDataset([0.0, 0.1], [rng.normal(0, 1, (n, 1)), rng.normal(0.5, 1, (n, 1))])


def test_training_reproducible_and_loss_decreases():
    ds = _gauss_pair()
    grid = make_grid("explicit", times=[0.0, 0.1])
    cfg = TrainConfig(epochs=30, batch_size=500, lr=3e-3, seed=4)
    m1, r1 = train(make_model(1, hidden=(16, 16), activation="silu", seed=1), ds, grid, cfg)
    m2, r2 = train(make_model(1, hidden=(16, 16), activation="silu", seed=1), ds, grid, cfg)
    assert r1.epoch_losses == r2.epoch_losses
    assert all(np.array_equal(a, b) for a, b in zip(m1.net.arrays(), m2.net.arrays()))
    assert np.mean(r1.epoch_losses[-5:]) <= np.mean(r1.epoch_losses[:5])
    assert r1.steps == 30 and np.isfinite(r1.final_loss)


def test_progress_lines():
    lines = []
    ds = _gauss_pair(200)
    grid = make_grid("explicit", times=[0.0, 0.1])
    cfg = TrainConfig(epochs=4, batch_size=50, log_every=2)
    train(make_model(1, hidden=(4,)), ds, grid, cfg, progress=lines.append)
    assert len(lines) == 2 and lines[0].split()[0] == "epoch" and "lr" in lines[0]


def test_static_training_visits_all_intervals():
    rng = np.random.default_rng(0)
    data = rng.normal(2.0, 0.3, (500, 2))
    grid = make_grid("log", 5, t_min=0.05)
    cfg = TrainConfig(epochs=3, batch_size=100)
    _, rep = train(make_model(2, hidden=(8,)), StaticSource(data, LatentDensity.std_normal(2)), grid, cfg)
    assert rep.steps == 15


def test_non_finite_loss_aborts():
    ds = _gauss_pair(100)
    ds.samples[1][0, 0] = np.nan
    grid = make_grid("explicit", times=[0.0, 0.1])
    with pytest.raises(TrainingError, match="epoch 0"):
        train(make_model(1, hidden=(4,)), ds, grid, TrainConfig(epochs=2, batch_size=1000))


def test_missing_knot_is_data_error():
    from tdde.simdata import DataError
    ds = _gauss_pair(100)
    grid = make_grid("explicit", times=[0.0, 0.05, 0.1])
    with pytest.raises(DataError):
        train(make_model(1, hidden=(4,)), ds, grid, TrainConfig(epochs=1))


def test_ml_divergence_guard():
    # lambda = 0 with constant data: -mean g is unbounded below
    data = np.zeros((100, 1))
    grid = make_grid("linear", 2)
    cfg = TrainConfig(epochs=5000, batch_size=64, lr=0.05)
    with pytest.raises(TrainingError, match="diverged"):
        ml_train(make_model(1, hidden=(16,)), data, LatentDensity.std_normal(1), grid, 0.0, cfg,
                 divergence=1e3)


def test_ml_rejects_negative_lambda():
    with pytest.raises(ValueError):
        ml_train(make_model(1, hidden=(4,)), np.zeros((3, 1)), LatentDensity.std_normal(1),
                 make_grid("linear", 2), -1.0, TrainConfig(epochs=1))
