"""Penalized-likelihood training mode.

Pointwise stationarity of ``-E_data[g] + lam E_latent[g^2]`` over free
functions gives ``g* = rho_data / (2 lam rho_latent)``, a density ratio.
"""
import numpy as np
import pytest
from scipy.stats import norm

from tdde.classifier import make_model
from tdde.density import DensityModel, log_density_data
from tdde.timegrid import LatentDensity, make_grid
from tdde.training import TrainConfig, ml_train


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((20_000, 1))
    latent = LatentDensity(1, cov=[[2.0]])
    grid = make_grid("linear", 1)
    cfg = TrainConfig(epochs=3000, batch_size=2000, lr=3e-3, seed=1)
    model, report = ml_train(make_model(1, hidden=(32, 32), seed=2), data, latent, grid, 0.5, cfg)
    return DensityModel(model, grid, latent), report


def g_of(dm, x):
    return log_density_data(dm, x[:, None]) - dm.base.logpdf(x[:, None])


def test_ml_recovers_density_ratio(fitted):
    dm, report = fitted
    assert np.all(np.isfinite(report.epoch_losses))
    x = np.linspace(-2, 2, 81)
    ratio = np.exp(norm.logpdf(x) - norm.logpdf(x, scale=np.sqrt(2.0)))
    # lam = 0.5 makes g* equal the ratio itself
    assert np.max(np.abs(g_of(dm, x) - ratio)) < 0.1


def test_ml_latent_mean_of_g_is_one_over_two_lambda(fitted):
    dm, _ = fitted
    z = dm.base.sample(50_000, np.random.default_rng(3))[:, 0]
    assert np.mean(g_of(dm, z)) == pytest.approx(1.0, abs=0.05)


@pytest.mark.xfail(strict=True, reason="the stated objective is optimized by a density ratio, "
                   "so base log-pdf + g is not the data log-density")
def test_ml_log_density_matches_standard_normal(fitted):
    dm, _ = fitted
    x = np.linspace(-2, 2, 81)
    assert np.max(np.abs(log_density_data(dm, x[:, None]) - norm.logpdf(x))) < 0.1


@pytest.mark.xfail(strict=True, reason="at the optimum the latent mean of g is 1/(2 lam), not 0")
def test_ml_constraint_term_vanishes(fitted):
    dm, _ = fitted
    z = dm.base.sample(50_000, np.random.default_rng(4))[:, 0]
    assert abs(np.mean(g_of(dm, z))) < 0.05
