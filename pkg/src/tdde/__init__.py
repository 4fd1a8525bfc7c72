"""Density estimation with time-dependent classifiers.

A network ``f(x, t)`` is trained to tell apart samples drawn at neighboring
times; its output integrates to ``log rho_t``. Static data are handled by
bridging a Gaussian latent to the data with the linear interpolant.
"""
from .classifier import ClassifierModel, d_eval, f_eval, grad_f_x, load_model, make_model, save_model
from .density import DensityModel, kl_estimates, log_density_at, log_density_at_knot, log_density_data, score
from .diffcore import ShapeError, TrainingError
from .evaluation import ecdf_distance, grid_l2, kde_fit_silverman, kde_logpdf, rarity_scores, roc_auc, sinkhorn_ot
from .samplers import DataInit, Fixed, UniformBox, hmc, seed_chains, ula
from .simdata import PathDataset
from .timegrid import LatentDensity, TimeGrid, make_grid
from .training import StaticSource, TrainConfig, ml_train, train

__version__ = "0.1.0"

__all__ = [
    "ClassifierModel", "d_eval", "f_eval", "grad_f_x", "load_model", "make_model", "save_model",
    "DensityModel", "kl_estimates", "log_density_at", "log_density_at_knot", "log_density_data", "score",
    "ShapeError", "TrainingError",
    "ecdf_distance", "grid_l2", "kde_fit_silverman", "kde_logpdf", "rarity_scores", "roc_auc", "sinkhorn_ot",
    "DataInit", "Fixed", "UniformBox", "hmc", "seed_chains", "ula",
    "PathDataset",
    "LatentDensity", "TimeGrid", "make_grid",
    "StaticSource", "TrainConfig", "ml_train", "train",
]
