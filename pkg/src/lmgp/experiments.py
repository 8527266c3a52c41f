"""Declarative experiment runners behind the command-line tool.

Every runner takes an :class:`ExperimentConfig`, writes CSV files under the
configured output directory and returns a :class:`RunSummary`. CSV files start
with a comment line holding the tool version and a hash of the resolved
configuration, so two runs with identical configuration and seed produce
byte-identical files. Wall times go to a separate ``timings.json`` instead.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .artifact import load_model, save_model
from .bayesopt import (
    DIRECTIONS,
    MAXIMIZE,
    CandidatePool,
    bo_run,
    load_candidate_csv,
    random_search_run,
    write_trajectory_csv,
)
from .data import MixedDataset, read_dataset_csv
from .gp import FitError
from .latent import NAN_RANDOM, NAN_ZERO, STRATEGIES, latent_positions, write_latent_csv
from .optimize import MODEL_KINDS, FitConfig, fit_with_continuation
from .testbed import (
    VARLEN_FUNCTIONS,
    NoiseSpec,
    add_noise,
    apply_varlen_pattern,
    get_function,
    mse,
    noise_presets,
    sample_mixed_design,
)
from .testbed.sensitivity import total_effect_indices, write_indices_csv

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("fit", "predict", "sweep", "sensitivity", "latent", "varlen", "bo")
NOISE_PRESETS = {"zero": 0, "small": 1, "large": 2}

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "sweep"
    function: str | None = None
    dataset: str | None = None
    models: tuple[str, ...] = ("lmgp",)
    prior: str = "onehot"
    train_sizes: tuple[int, ...] = (100, 200, 300, 400)
    noise: tuple = ("zero", "small", "large")
    replicates: int = 10
    test_size: int = 10_000
    train_fraction: float | None = None
    seed: int = 0
    out: str = "results"
    jobs: int = 1
    optimizer: FitConfig = field(default_factory=FitConfig)
    # sensitivity
    n_base: int = 2 ** 14
    # varlen
    nan_strategies: tuple[str, ...] = (NAN_ZERO, NAN_RANDOM)
    # bo
    pool_size: int = 240
    init_size: int = 40
    bo_seeds: int = 30
    direction: str = MAXIMIZE
    warm_start: bool = False
    exclude_target: bool = False
    # fit / predict / latent
    artifact: str | None = None
    inputs: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not self.train_sizes or any(int(n) < 1 for n in self.train_sizes):
            raise ConfigError("training sizes must be positive")
        if self.test_size < 1:
            raise ConfigError("test size must be positive")
        for m in self.models:
            if m not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {m!r}; expected one of {MODEL_KINDS}")
        if self.prior not in STRATEGIES:
            raise ConfigError(f"unknown prior strategy {self.prior!r}")
        for s in self.nan_strategies:
            if s not in (NAN_ZERO, NAN_RANDOM):
                raise ConfigError(f"unknown NaN strategy {s!r}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}")
        if self.function is not None:
            try:
                get_function(self.function)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for p in (self.dataset, self.artifact, self.inputs):
            if p is not None and not os.path.exists(p):
                raise ConfigError(f"file not found: {p}")
        if self.train_fraction is not None and not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        for v in self.noise:
            if not (v in NOISE_PRESETS or (isinstance(v, (int, float)) and v >= 0)):
                raise ConfigError(f"noise entries must be nonnegative numbers or one of {sorted(NOISE_PRESETS)}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"] = asdict(self.optimizer)
        return d

    def digest(self) -> str:
        """Hash of everything that affects results (not where they are written)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {
    "experiment": ("kind", "function", "dataset", "models", "prior", "seed"),
    "data": ("train_sizes", "noise", "replicates", "test_size", "train_fraction"),
    "sensitivity": ("n_base",),
    "varlen": ("nan_strategies",),
    "bo": ("pool_size", "init_size", "bo_seeds", "direction", "warm_start", "exclude_target"),
    "model": ("artifact", "inputs"),
    "output": ("out", "jobs"),
}
_RENAME = {("bo", "seeds"): "bo_seeds", ("output", "dir"): "out", ("varlen", "strategies"): "nan_strategies"}


def config_from_dict(raw: dict | None, **overrides) -> ExperimentConfig:
    """Build a config from the sectioned mapping of a YAML file.

    Sections: ``experiment``, ``data``, ``optimizer``, ``sensitivity``,
    ``varlen``, ``bo``, ``model`` and ``output``. ``overrides`` (CLI flags)
    win over file values; ``None`` overrides are ignored.
    """
    raw = dict(raw or {})
    values: dict = {}
    opt = raw.pop("optimizer", None) or {}
    for sec, body in raw.items():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown config section {sec!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {sec!r} must be a mapping")
        for k, v in body.items():
            key = _RENAME.get((sec, k), k)
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"unknown key {k!r} in section {sec!r}")
            values[key] = v
    for k, v in overrides.items():
        if v is not None:
            values[k] = v
    for k in ("models", "train_sizes", "noise", "nan_strategies"):
        if k in values and not isinstance(values[k], (list, tuple)):
            values[k] = [values[k]]
        if k in values:
            values[k] = tuple(values[k])
    if "train_sizes" in values:
        values["train_sizes"] = tuple(int(n) for n in values["train_sizes"])
    if values.get("function") is not None:
        values["function"] = str(values["function"])
    try:
        fit_cfg = FitConfig.from_dict(opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer section: {exc}") from None
    if "seed" in values:
        fit_cfg = replace(fit_cfg, seed=int(values["seed"]))
    fit_cfg = replace(fit_cfg, prior=values.get("prior", "onehot"))
    try:
        return ExperimentConfig(optimizer=fit_cfg, **values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return config_from_dict(raw, **overrides)


# ---------------------------------------------------------------------------
# results


@dataclass
class ResultRecord:
    experiment: str
    model: str
    variant: str
    function: str
    n_train: int
    noise_variance: float
    replicate: int
    seed: int
    test_mse: float
    noise_estimate: float
    objective: float
    status: str = "ok"
    wall_time: float = 0.0


RECORD_COLUMNS = [f.name for f in fields(ResultRecord) if f.name != "wall_time"]


@dataclass
class RunSummary:
    outputs: list[Path]
    n_failed: int = 0
    records: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.n_failed else EXIT_OK


def _header_comment(cfg: ExperimentConfig) -> str:
    return f"lmgp {__version__} config={cfg.digest()} seed={cfg.seed}"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_records_csv(records, path, comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])


def _write_rows(path, header, rows, comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_timings(out: Path, name: str, records) -> None:
    path = out / "timings.json"
    data = {}
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError:
            data = {}
    data[name] = [r.wall_time for r in records]
    path.write_text(json.dumps(data, indent=1) + "\n")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def derive_seed(*parts: int) -> int:
    """A 32-bit seed determined by ``parts``."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def resolve_noise(fid, level) -> float:
    if isinstance(level, str):
        return noise_presets(fid)[NOISE_PRESETS[level]]
    return float(level)


def _map(fn, cells, jobs: int):
    if jobs <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


# ---------------------------------------------------------------------------
# synthetic benchmark cells


@dataclass(frozen=True)
class Cell:
    experiment: str
    function: int
    model: str
    variant: str
    n_train: int
    noise_index: int
    noise_variance: float
    replicate: int
    seed: int
    test_size: int
    optimizer: FitConfig
    varlen: bool = False


def replicate_data(fid: int, n_train: int, test_size: int, noise_variance: float, seed: int,
                   noise_index: int, replicate: int, varlen: bool = False):
    """Noisy train and test datasets of one replicate; shared by every model of a cell."""
    fn = get_function(fid)
    tr = sample_mixed_design(fn, n_train, seed=derive_seed(seed, fid, replicate, n_train, 0))
    te = sample_mixed_design(fn, test_size, seed=derive_seed(seed, fid, replicate, 1))
    if varlen:
        tr = MixedDataset(tr.schema, tr.X, apply_varlen_pattern(tr.T))
        te = MixedDataset(te.schema, te.X, apply_varlen_pattern(te.T))
    ytr = add_noise(fn.evaluate(tr.X, tr.T),
                    NoiseSpec(noise_variance, derive_seed(seed, fid, replicate, n_train, 2, noise_index)))
    yte = add_noise(fn.evaluate(te.X, te.T), NoiseSpec(noise_variance, derive_seed(seed, fid, replicate, 3, noise_index)))
    return tr.with_y(ytr), te.with_y(yte)


def run_cell(cell: Cell) -> ResultRecord:
    t0 = time.perf_counter()
    train, test = replicate_data(cell.function, cell.n_train, cell.test_size, cell.noise_variance, cell.seed,
                                 cell.noise_index, cell.replicate, cell.varlen)
    fit_seed = derive_seed(cell.seed, cell.function, cell.replicate, cell.n_train, 4, cell.noise_index)
    cfg = replace(cell.optimizer, seed=fit_seed)
    if cell.varlen:
        cfg = replace(cfg, nan_strategy=cell.variant, nan_seed=fit_seed)
    rec = ResultRecord(cell.experiment, cell.model, cell.variant, get_function(cell.function).name, cell.n_train,
                       cell.noise_variance, cell.replicate, fit_seed, math.nan, math.nan, math.nan)
    try:
        model = fit_with_continuation(train, cell.model, cfg)
        mu, _ = model.predict(test.X, test.T)
        rec.test_mse = mse(mu, test.y)
        rec.noise_estimate = float(model.noise_variance)
        rec.objective = float(model.objective)
    except (FitError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("cell failed (%s, n=%d, rep=%d): %s", cell.model, cell.n_train, cell.replicate, exc)
        rec.status = "failed"
    rec.wall_time = time.perf_counter() - t0
    return rec


def _function_list(cfg: ExperimentConfig) -> list[int]:
    if cfg.function is None:
        raise ConfigError("this experiment needs a benchmark function")
    return [get_function(f).id for f in str(cfg.function).split(",")]


def sweep_cells(cfg: ExperimentConfig) -> list[Cell]:
    cells = []
    for fid in _function_list(cfg):
        for n in cfg.train_sizes:
            for k, level in enumerate(cfg.noise):
                v = resolve_noise(fid, level)
                for model in cfg.models:
                    for r in range(cfg.replicates):
                        cells.append(Cell("sweep", fid, model, cfg.prior if model == "lmgp" else "-", int(n), k, v,
                                          r, cfg.seed, cfg.test_size, cfg.optimizer))
    return cells


def _finish(cfg, name: str, cells_or_records, runner=run_cell) -> RunSummary:
    out = _outdir(cfg)
    records = _map(runner, cells_or_records, cfg.jobs)
    path = out / f"{name}.csv"
    write_records_csv(records, path, _header_comment(cfg))
    _write_timings(out, name, records)
    return RunSummary([path], sum(r.status != "ok" for r in records), records)


def run_benchmark_sweep(cfg: ExperimentConfig) -> RunSummary:
    """Fit every (function, n, noise, model, replicate) cell and record test MSE."""
    return _finish(cfg, "sweep", sweep_cells(cfg))


def varlen_cells(cfg: ExperimentConfig) -> list[Cell]:
    cells = []
    for fid in _function_list(cfg):
        if fid not in VARLEN_FUNCTIONS:
            raise ConfigError("the variable-length experiment supports the borehole and OLT functions only")
        for n in cfg.train_sizes:
            for k, level in enumerate(cfg.noise):
                v = resolve_noise(fid, level)
                for strategy in cfg.nan_strategies:
                    for r in range(cfg.replicates):
                        cells.append(Cell("varlen", fid, "lmgp", strategy, int(n), k, v, r, cfg.seed,
                                          cfg.test_size, cfg.optimizer, varlen=True))
    return cells


def run_varlen_experiment(cfg: ExperimentConfig) -> RunSummary:
    """LMGP on variable-length inputs under each NaN-block strategy."""
    return _finish(cfg, "varlen", varlen_cells(cfg))


# ---------------------------------------------------------------------------
# sensitivity


def run_sensitivity(cfg: ExperimentConfig) -> RunSummary:
    out = _outdir(cfg)
    paths = []
    for fid in _function_list(cfg):
        names, idx = total_effect_indices(fid, cfg.n_base, seed=cfg.seed)
        path = out / f"sensitivity_{get_function(fid).name}.csv"
        write_indices_csv(names, idx, path, _header_comment(cfg))
        paths.append(path)
    return RunSummary(paths)


# ---------------------------------------------------------------------------
# BO race


def bo_pool(cfg: ExperimentConfig) -> CandidatePool:
    if cfg.dataset is not None:
        return load_candidate_csv(cfg.dataset)
    if cfg.function is None:
        raise ConfigError("bo needs a candidate CSV (columns x1..x{d_x},t1..t{d_t},y; levels as integer "
                          "indices) under experiment.dataset, or a benchmark function for a synthetic pool")
    fn = get_function(cfg.function)
    d = sample_mixed_design(fn, cfg.pool_size, seed=derive_seed(cfg.seed, fn.id, 5))
    return CandidatePool(d.with_y(fn.evaluate(d.X, d.T)))


@dataclass(frozen=True)
class BoJob:
    model: str
    seed: int
    pool: CandidatePool
    init_size: int
    direction: str
    optimizer: FitConfig
    warm_start: bool
    exclude_target: bool


def run_bo_job(job: BoJob):
    t0 = time.perf_counter()
    if job.model == "random":
        traj = random_search_run(job.pool, job.init_size, job.direction, job.seed, exclude_target=job.exclude_target)
    else:
        traj = bo_run(job.pool, job.init_size, job.model, job.direction, job.seed, config=job.optimizer,
                      warm_start=job.warm_start, exclude_target=job.exclude_target)
    return traj, time.perf_counter() - t0


def run_bo_race(cfg: ExperimentConfig) -> RunSummary:
    """BO with each configured model plus a random-search baseline, over ``bo_seeds`` seeds."""
    out = _outdir(cfg)
    pool = bo_pool(cfg)
    if not 0 < cfg.init_size < len(pool):
        raise ConfigError(f"init_size must lie in 1..{len(pool) - 1}")
    models = list(dict.fromkeys([*cfg.models, "random"]))
    jobs = [BoJob(m, s, pool, cfg.init_size, cfg.direction, cfg.optimizer, cfg.warm_start, cfg.exclude_target)
            for m in models for s in range(cfg.seed, cfg.seed + cfg.bo_seeds)]
    results = _map(run_bo_job, jobs, cfg.jobs)
    comment = _header_comment(cfg)
    tdir = out / "trajectories"
    tdir.mkdir(exist_ok=True)
    paths, per_seed = [], []
    n_failed = 0
    for job, (traj, _) in zip(jobs, results):
        p = tdir / f"{job.model}_seed{job.seed}.csv"
        write_trajectory_csv(traj, p, comment)
        paths.append(p)
        found = traj.found_at is not None
        n_failed += traj.aborted
        per_seed.append((job.model, job.seed, traj.n_additional, "found" if found else "aborted"))
    _write_rows(out / "bo_runs.csv", ["model", "seed", "additional", "status"], per_seed, comment)
    summary, hist = [], []
    for m in models:
        counts = [c for mm, _, c, st in per_seed if mm == m and st == "found"]
        summary.append((m, len(counts), float(np.mean(counts)) if counts else math.nan,
                        float(np.std(counts)) if counts else math.nan))
        for value, count in sorted(zip(*np.unique(counts, return_counts=True))) if counts else []:
            hist.append((m, int(value), int(count)))
    _write_rows(out / "bo_summary.csv", ["model", "runs", "mean_additional", "std_additional"], summary, comment)
    _write_rows(out / "bo_histogram.csv", ["model", "additional", "count"], hist, comment)
    (out / "timings.json").write_text(json.dumps({"bo": [t for _, t in results]}, indent=1) + "\n")
    paths += [out / "bo_runs.csv", out / "bo_summary.csv", out / "bo_histogram.csv"]
    return RunSummary(paths, n_failed, per_seed)


# ---------------------------------------------------------------------------
# fit / predict / latent


def _split(data: MixedDataset, fraction: float | None, seed: int):
    if fraction is None:
        return data, None
    rng = np.random.default_rng(derive_seed(seed, 6))
    idx = rng.permutation(data.n)
    k = max(1, min(data.n - 1, int(round(fraction * data.n))))
    return data.subset(np.sort(idx[:k])), data.subset(np.sort(idx[k:]))


def _training_data(cfg: ExperimentConfig):
    if cfg.dataset is not None:
        return _split(read_dataset_csv(cfg.dataset), cfg.train_fraction, cfg.seed)
    if cfg.function is None:
        raise ConfigError("fit needs experiment.dataset (a dataset CSV) or a benchmark function")
    fid = get_function(cfg.function).id
    v = resolve_noise(fid, cfg.noise[0])
    return replicate_data(fid, cfg.train_sizes[0], cfg.test_size, v, cfg.seed, 0, 0)


def run_fit(cfg: ExperimentConfig) -> RunSummary:
    """Fit one model and save it as ``model.json`` plus a one-row ``fit.csv``."""
    out = _outdir(cfg)
    train, test = _training_data(cfg)
    kind = cfg.models[0]
    t0 = time.perf_counter()
    try:
        model = fit_with_continuation(train, kind, cfg.optimizer)
    except FitError as exc:
        path = out / "fit.csv"
        _write_rows(path, ["model", "n_train", "status", "message"], [(kind, train.n, "failed", str(exc))],
                    _header_comment(cfg))
        return RunSummary([path], 1)
    art = out / "model.json"
    save_model(model, art)
    test_mse = math.nan
    if test is not None:
        mu, _ = model.predict(test.X, test.T)
        test_mse = mse(mu, test.y)
    path = out / "fit.csv"
    _write_rows(path, ["model", "n_train", "objective", "noise_estimate", "test_mse", "status"],
                [(kind, train.n, float(model.objective), float(model.noise_variance), test_mse, "ok")],
                _header_comment(cfg))
    (out / "timings.json").write_text(json.dumps({"fit": [time.perf_counter() - t0]}, indent=1) + "\n")
    return RunSummary([art, path])


def _artifact(cfg: ExperimentConfig) -> str:
    if cfg.artifact is None:
        raise ConfigError("a model artifact (model.artifact or --model-file) is required")
    return cfg.artifact


def run_predict(cfg: ExperimentConfig) -> RunSummary:
    """Predict at the inputs CSV with a saved model; writes ``mean,variance``."""
    out = _outdir(cfg)
    if cfg.inputs is None:
        raise ConfigError("predict needs an inputs CSV (model.inputs or --inputs)")
    model = load_model(_artifact(cfg))
    data = read_dataset_csv(cfg.inputs, model.train.schema)
    mu, var = model.predict(data.X, data.T)
    path = out / "predictions.csv"
    _write_rows(path, ["mean", "variance"], zip(map(float, mu), map(float, var)), _header_comment(cfg))
    return RunSummary([path])


def run_latent_export(cfg: ExperimentConfig) -> RunSummary:
    """Canonicalized latent positions of a saved (or freshly fitted) model."""
    out = _outdir(cfg)
    if cfg.artifact is not None:
        model = load_model(cfg.artifact)
    else:
        train, _ = _training_data(cfg)
        model = fit_with_continuation(train, cfg.models[0], cfg.optimizer)
    path = out / "latent.csv"
    try:
        rows = latent_positions(model)
    except NotImplementedError as exc:
        raise ConfigError(str(exc)) from None
    write_latent_csv(rows, path, _header_comment(cfg))
    return RunSummary([path])


RUNNERS = {
    "fit": run_fit,
    "predict": run_predict,
    "latent": run_latent_export,
    "sweep": run_benchmark_sweep,
    "varlen": run_varlen_experiment,
    "sensitivity": run_sensitivity,
    "bo": run_bo_race,
}


def run(cfg: ExperimentConfig) -> RunSummary:
    return RUNNERS[cfg.kind](cfg)
