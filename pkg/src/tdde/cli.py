"""Command-line front end.

    tdde <simulate|train|density-grid|sample|eval|rare-score> --config FILE
         [--out DIR] [--seed K] [--threads N]

Exit codes: 0 success, 1 runtime failure, 2 configuration error. Every file
written gets a ``<name>.meta.json`` sidecar holding the resolved config and
a git-style blob hash of the file contents.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from ._jit import set_threads
from .classifier import load_model, make_model, save_model
from .density import DensityModel, log_density_at, score
from .evaluation import ecdf_distance, grid_l2, rarity_scores, roc_auc, sinkhorn_ot
from .samplers import DataInit, Fixed, UniformBox, hmc, seed_chains, ula
from .simdata import (
    BoucWenParams,
    DuffingParams,
    OuParams,
    PathDataset,
    gen_checkerboard,
    gen_circles,
    gen_inliers_outliers,
    gen_moons,
    gen_semisphere,
    load_csv,
    load_labeled_csv,
    read_table,
    simulate_bouc_wen,
    simulate_duffing,
    simulate_ou,
    write_csv,
)
from .timegrid import LatentDensity, TimeGrid, make_grid
from .training import StaticSource, TrainConfig, ml_train, train

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

SIM_PARAMS = {"duffing": DuffingParams, "bouc_wen": BoucWenParams, "ou": OuParams}


class ConfigError(Exception):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# schema


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Section):
    source: Literal["circles", "moons", "checkerboard", "semisphere", "inliers_outliers",
                    "duffing", "bouc_wen", "ou", "csv", "paths"] = "circles"
    n: int = Field(10_000, ge=1)
    n_test: int = Field(0, ge=0)
    csv: Optional[str] = None
    paths: Optional[str] = None
    label_col: str = "label"
    normalize: bool = False
    noise: Optional[float] = Field(None, ge=0)
    n_dim: int = Field(3, ge=1)
    alpha: float = Field(5.0, gt=0)
    outlier_frac: float = Field(0.05, ge=0, le=1)
    box: float = Field(6.0, gt=0)
    t_record: Optional[list[float]] = None
    t_end: float = Field(0.8, gt=0)
    n_record: int = Field(17, ge=2)
    dt_sim: float = Field(0.005, gt=0)
    params: dict[str, float] = {}

    @model_validator(mode="after")
    def _check(self):
        if self.source == "csv" and not self.csv:
            raise ValueError("source 'csv' needs data.csv")
        if self.source == "paths" and not self.paths:
            raise ValueError("source 'paths' needs data.paths")
        return self


class GridSection(_Section):
    kind: Literal["linear", "log", "logarithmic", "explicit", "data"] = "log"
    N: int = Field(10, ge=1)
    t_min: float = Field(0.01, gt=0)
    t_max: Optional[float] = Field(None, gt=0)
    times: Optional[list[float]] = None


class ModelSection(_Section):
    hidden: list[int] = [128, 128, 128]
    activation: Literal["relu", "silu"] = "relu"
    embedding: Literal["raw", "fourier"] = "raw"
    n_freq: int = Field(16, ge=1)
    scale: float = Field(1.0, gt=0)
    file: str = "model.json"


class TrainSection(_Section):
    mode: Literal["contrastive", "ml"] = "contrastive"
    score: Literal["brier", "log"] = "brier"
    nu: float = Field(1.0, gt=0)
    epochs: int = Field(1000, ge=1)
    batch_size: int = Field(1000, ge=1)
    lr: float = Field(1e-3, gt=0)
    lr_decay: float = Field(1.0, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    lam: float = Field(1.0, ge=0)
    log_every: int = Field(100, ge=0)


class SeedSection(_Section):
    kind: Literal["uniform_box", "data", "fixed"] = "uniform_box"
    lower: Optional[list[float]] = None
    upper: Optional[list[float]] = None
    noise_std: float = Field(0.01, ge=0)
    point: Optional[list[float]] = None


class SampleSection(_Section):
    sampler: Literal["ula", "hmc"] = "ula"
    n_chains: int = Field(10_000, ge=1)
    step: float = Field(1e-4, ge=0)
    steps: int = Field(200, ge=0)
    n_leapfrog: int = Field(100, ge=1)
    burn_in: int = Field(500, ge=0)
    t: Optional[float] = None
    seeds: SeedSection = SeedSection()


class DensityGridSection(_Section):
    t: Optional[float] = None
    lower: list[float] = [-1.5, -1.5]
    upper: list[float] = [1.5, 1.5]
    n: list[int] = [200, 200]


class EvalSection(_Section):
    metrics: list[Literal["ot", "ks", "l2"]] = ["ot", "ks"]
    a: Optional[str] = None
    b: Optional[str] = None
    epsilon: float = Field(0.01, gt=0)
    cap: int = Field(2000, ge=1)
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(10_000, ge=1)


class RareSection(_Section):
    csv: Optional[str] = None
    label_col: str = "label"
    normalize: bool = False


class OutputSection(_Section):
    dir: str = "run"


class ExperimentConfig(_Section):
    seed: int = 0
    data: DataSection = DataSection()
    grid: GridSection = GridSection()
    model: ModelSection = ModelSection()
    train: TrainSection = TrainSection()
    sample: SampleSection = SampleSection()
    density_grid: DensityGridSection = DensityGridSection()
    eval: EvalSection = EvalSection()
    rare: RareSection = RareSection()
    output: OutputSection = OutputSection()


def load_config(path, out=None, seed=None):
    """Parse and validate a YAML/JSON config; CLI overrides applied last."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"not valid YAML/JSON: {exc}") from None
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(field, err["msg"]) from None
    if out is not None:
        cfg.output.dir = out
    if seed is not None:
        cfg.seed = seed
    if cfg.data.source in SIM_PARAMS:
        known = {f.name for f in dataclasses.fields(SIM_PARAMS[cfg.data.source])}
        for key in cfg.data.params:
            if key not in known:
                raise ConfigError(f"data.params.{key}", f"unknown parameter for {cfg.data.source}")
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def blob_hash(data: bytes):
    """Git blob id of ``data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class Run:
    def __init__(self, cfg: ExperimentConfig, command):
        self.cfg = cfg
        self.command = command
        self.dir = cfg.output.dir
        os.makedirs(self.dir, exist_ok=True)
        self.written = []

    def path(self, name):
        return name if os.path.isabs(name) else os.path.join(self.dir, name)

    def sidecar(self, path, extra=None):
        with open(path, "rb") as fh:
            blob = fh.read()
        meta = {
            "file": os.path.basename(path),
            "command": self.command,
            "version": __version__,
            "hash": blob_hash(blob),
            "bytes": len(blob),
            "config": self.cfg.model_dump(mode="json"),
        }
        if extra:
            meta.update(extra)
        with open(path + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        self.written.append(path)

    def csv(self, name, X, header, extra=None):
        p = self.path(name)
        os.makedirs(os.path.dirname(p) or ".", exist_ok=True)
        write_csv(p, X, header)
        self.sidecar(p, extra)
        return p

    def json(self, name, obj):
        p = self.path(name)
        with open(p, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
        self.sidecar(p)
        return p


def _xcols(n):
    return [f"x_{k + 1}" for k in range(n)]


# ---------------------------------------------------------------------------
# data


def _record_times(d: DataSection):
    if d.t_record is not None:
        return np.asarray(d.t_record, dtype=np.float64)
    return np.linspace(0.0, d.t_end, d.n_record)


def _initial_density(d: DataSection):
    """The analytic density at t=0 of a simulator source."""
    p = SIM_PARAMS[d.source](**d.params)
    if d.source == "ou":
        return LatentDensity(1, [p.m0], [[p.v0]])
    return LatentDensity(len(p.mean), p.mean, p.initial_cov())


def make_static(d: DataSection, n, rng):
    """Static dataset for a generator source; (X, labels or None)."""
    if d.source == "circles":
        return gen_circles(n, rng, **({} if d.noise is None else {"noise": d.noise})), None
    if d.source == "moons":
        return gen_moons(n, rng, **({} if d.noise is None else {"noise": d.noise})), None
    if d.source == "checkerboard":
        return gen_checkerboard(n, rng), None
    if d.source == "semisphere":
        return gen_semisphere(d.n_dim, n, d.alpha, rng), None
    if d.source == "inliers_outliers":
        return gen_inliers_outliers(n, d.outlier_frac, d.box, d.n_dim, rng)
    raise ConfigError("data.source", f"{d.source!r} is not a static generator")


def make_paths(d: DataSection, n, rng):
    p = SIM_PARAMS[d.source](**d.params)
    times = _record_times(d)
    if d.source == "duffing":
        ds = simulate_duffing(p, n, d.dt_sim, times, rng)
    elif d.source == "bouc_wen":
        ds = simulate_bouc_wen(p, n, d.dt_sim, times, rng)
    else:
        ds = simulate_ou(p, n, times, rng)
    ds.meta["initial"] = _initial_density(d).to_dict()
    return ds


def load_training_data(cfg: ExperimentConfig):
    """Static matrix or PathDataset plus the base density for training."""
    d = cfg.data
    rng = np.random.default_rng(cfg.seed)
    if d.source == "csv":
        header, _ = read_table(d.csv)
        if header is not None and d.label_col in header:
            # a labeled file: the label column is not a feature
            X, _ = load_labeled_csv(d.csv, d.label_col, d.normalize)
        else:
            X = load_csv(d.csv, normalize=d.normalize)
        return X, LatentDensity.std_normal(X.shape[1])
    if d.source == "paths":
        ds = PathDataset.load(d.paths)
        init = ds.meta.get("initial")
        if init is None:
            raise ConfigError("data.paths", "manifest has no 'initial' density record")
        return ds, LatentDensity.from_dict(init)
    if d.source in SIM_PARAMS:
        return make_paths(d, d.n, rng), _initial_density(d)
    X, _ = make_static(d, d.n, rng)
    return X, LatentDensity.std_normal(X.shape[1])


def build_grid(g: GridSection, paths: Optional[PathDataset]):
    if g.kind == "data":
        if paths is None:
            raise ConfigError("grid.kind", "'data' grids need path data")
        return TimeGrid(paths.times, "explicit")
    if g.kind == "explicit":
        if not g.times:
            raise ConfigError("grid.times", "explicit grid needs times")
        return make_grid("explicit", times=g.times)
    t_max = g.t_max if g.t_max is not None else (float(paths.times[-1]) if paths else 1.0)
    return make_grid(g.kind, g.N, g.t_min, t_max=t_max)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, run: Run):
    d = cfg.data
    rng = np.random.default_rng(cfg.seed)
    if d.source in SIM_PARAMS:
        ds = make_paths(d, d.n, rng)
        ds.save(run.path("paths"))
        for name in ds_files(run, ds):
            run.sidecar(name)
        print(f"wrote {len(ds.times)} knots x {d.n} paths to {run.path('paths')}")
        return
    if d.source in ("csv", "paths"):
        raise ConfigError("data.source", "simulate needs a generator source")
    X, labels = make_static(d, d.n, rng)
    if labels is None:
        run.csv("data.csv", X, _xcols(X.shape[1]))
    else:
        run.csv("labeled.csv", np.column_stack([X, labels]), _xcols(X.shape[1]) + [d.label_col])
    if d.n_test:
        T, t_labels = make_static(d, d.n_test, np.random.default_rng([cfg.seed, 1]))
        if t_labels is None:
            run.csv("test.csv", T, _xcols(T.shape[1]))
        else:
            run.csv("test_labeled.csv", np.column_stack([T, t_labels]),
                    _xcols(T.shape[1]) + [d.label_col])
    print(f"wrote {d.n} samples to {run.dir}")


def ds_files(run, ds):
    base = run.path("paths")
    return [os.path.join(base, f"t{j:04d}.csv") for j in range(len(ds.times))] + \
        [os.path.join(base, "manifest.json")]


def cmd_train(cfg, run: Run):
    data, base = load_training_data(cfg)
    paths = data if isinstance(data, PathDataset) else None
    grid = build_grid(cfg.grid, paths)
    n_dim = data.n_dim if paths else data.shape[1]
    m = cfg.model
    model = make_model(n_dim, tuple(m.hidden), m.activation, m.embedding, m.n_freq, m.scale, cfg.seed)
    t = cfg.train
    tc = TrainConfig(t.score, t.nu, t.epochs, t.batch_size, t.lr, t.lr_decay, t.weight_decay,
                     cfg.seed, t.log_every)
    if t.mode == "ml":
        if paths is not None:
            raise ConfigError("train.mode", "maximum-likelihood mode needs static data")
        model, report = ml_train(model, data, base, grid, t.lam, tc)
    else:
        source = paths if paths is not None else StaticSource(data, base)
        model, report = train(model, source, grid, tc)
    model_path = run.path(m.file)
    save_model(model, model_path, extra={
        "grid": grid.to_dict(),
        "base": base.to_dict(),
        "mode": "paths" if paths is not None else "static",
    })
    run.sidecar(model_path)
    run.json("train_report.json", report.to_dict())
    print(f"final loss {report.final_loss:.6f}; model saved to {model_path}")


def load_density_model(cfg, run: Run):
    path = run.path(cfg.model.file)
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    model, rec = load_model(path)
    return DensityModel(model, TimeGrid.from_dict(rec["grid"]), LatentDensity.from_dict(rec["base"]))


def cmd_density_grid(cfg, run: Run):
    dm = load_density_model(cfg, run)
    g = cfg.density_grid
    n = dm.n_dim
    if not len(g.lower) == len(g.upper) == len(g.n) == n:
        raise ConfigError("density_grid", f"lower/upper/n must each have {n} entries")
    t = dm.grid.times[-1] if g.t is None else g.t
    axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(g.lower, g.upper, g.n)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    logp = log_density_at(dm, X, t)
    out = np.column_stack([X, np.full(X.shape[0], t), logp])
    run.csv("density_grid.csv", out, _xcols(n) + ["t", "log_density"])
    print(f"evaluated {X.shape[0]} grid points at t={t}")


def _seed_strategy(cfg, n_dim):
    s = cfg.sample.seeds
    if s.kind == "uniform_box":
        lower = s.lower if s.lower is not None else [-1.0] * n_dim
        upper = s.upper if s.upper is not None else [1.0] * n_dim
        if len(lower) != n_dim or len(upper) != n_dim:
            raise ConfigError("sample.seeds", f"box bounds need {n_dim} entries")
        return UniformBox(lower, upper)
    if s.kind == "fixed":
        if s.point is None or len(s.point) != n_dim:
            raise ConfigError("sample.seeds.point", f"need a point with {n_dim} entries")
        return Fixed(s.point)
    data, _ = load_training_data(cfg)
    if isinstance(data, PathDataset):
        data = data.samples[-1]
    return DataInit(data, s.noise_std)


def cmd_sample(cfg, run: Run):
    dm = load_density_model(cfg, run)
    s = cfg.sample
    t = dm.grid.times[-1] if s.t is None else s.t
    rng = np.random.default_rng([cfg.seed, 2])
    seeds = seed_chains(_seed_strategy(cfg, dm.n_dim), s.n_chains, rng)
    if s.sampler == "ula":
        out = ula(lambda x: score(dm, x, t), seeds, s.step, s.steps, rng)
        draws = out.samples
    else:
        out = hmc(lambda x: log_density_at(dm, x, t), lambda x: score(dm, x, t), seeds, s.step,
                  s.n_leapfrog, s.steps, s.burn_in, rng)
        draws = out.draws()
    stats = {"sampler": s.sampler, "t": float(t), "n_draws": int(draws.shape[0]), **out.stats()}
    run.csv("samples.csv", draws, _xcols(dm.n_dim), extra={"sampler_stats": stats})
    run.json("sampler_stats.json", stats)
    print(f"wrote {draws.shape[0]} samples ({s.sampler})")


def _read_grid_csv(path):
    header, body = read_table(path)
    if header is None or header[-1] != "log_density":
        raise ValueError(f"{path}: not a density-grid CSV")
    n = len(header) - 2
    X = body[:, :n]
    shape = tuple(np.unique(X[:, k]).size for k in range(n))
    spacing = [np.diff(np.unique(X[:, k])).mean() if shape[k] > 1 else 1.0 for k in range(n)]
    return X, body[:, -1], shape, float(np.prod(spacing))


def cmd_eval(cfg, run: Run):
    e = cfg.eval
    if not e.a or not e.b:
        raise ConfigError("eval", "both eval.a and eval.b are required")
    results = []
    if "l2" in e.metrics:
        Xa, la, shape_a, vol = _read_grid_csv(e.a)
        Xb, lb, shape_b, _ = _read_grid_csv(e.b)
        if shape_a != shape_b or not np.allclose(Xa, Xb):
            raise ValueError("density grids differ")
        results.append({"metric": "l2", "value": grid_l2(la, lb, vol), "cell_volume": vol})
    sample_metrics = [m for m in e.metrics if m != "l2"]
    if sample_metrics:
        A, B = load_csv(e.a), load_csv(e.b)
        if "ot" in sample_metrics:
            r = sinkhorn_ot(A, B, e.epsilon, e.max_iter, e.tol, e.cap, seed=cfg.seed)
            results.append({"metric": "ot", "value": r.cost, **r.to_dict()})
        if "ks" in sample_metrics:
            for k in range(A.shape[1]):
                r = ecdf_distance(A[:, k], B[:, k])
                results.append({"metric": "ks", "dim": k + 1, "value": r.ks, "pvalue": r.pvalue})
                rows = np.concatenate([
                    np.column_stack([r.a[0], r.a[1], np.zeros(r.a[0].size)]),
                    np.column_stack([r.b[0], r.b[1], np.ones(r.b[0].size)]),
                ])
                run.csv(f"ecdf_x_{k + 1}.csv", rows, ["value", "cdf", "sample"])
    run.json("metrics.json", {"metrics": results, "inputs": {"a": e.a, "b": e.b}})
    for r in results:
        print(f"{r['metric']}{'' if 'dim' not in r else '[' + str(r['dim']) + ']'} = {r['value']:.6g}")


def cmd_rare_score(cfg, run: Run):
    r = cfg.rare
    if not r.csv:
        raise ConfigError("rare.csv", "a labeled CSV is required")
    dm = load_density_model(cfg, run)
    X, labels = load_labeled_csv(r.csv, r.label_col, r.normalize)
    s = rarity_scores(dm, X)
    order = np.argsort(-s, kind="mergesort")
    ranked = np.column_stack([np.arange(1, s.size + 1), order, s[order], labels[order]])
    run.csv("scores.csv", ranked, ["rank", "row", "score", "label"])
    roc = roc_auc(s, labels)
    run.csv("roc.csv", np.column_stack([roc.fpr, roc.tpr, roc.thresholds]), ["fpr", "tpr", "threshold"])
    run.json("metrics.json", {"metrics": [{"metric": "auc", "value": roc.auc}], "inputs": {"a": r.csv}})
    print(f"auc = {roc.auc:.6f}")


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "density-grid": cmd_density_grid,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "rare-score": cmd_rare_score,
}


def build_parser():
    p = argparse.ArgumentParser(prog="tdde", description="Density estimation with time-dependent classifiers.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML or JSON experiment file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker thread cap (default 1)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    set_threads(args.threads)
    try:
        cfg = load_config(args.config, args.out, args.seed)
        COMMANDS[args.command](cfg, Run(cfg, args.command))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
