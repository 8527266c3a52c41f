"""Maximum-likelihood fitting: parameter packing, gradients and multi-start search.

The packed vector is ``[omega..., map entries (row-major, free ones only), log10(delta)]``.
Each start runs scipy's L-BFGS-B (projected box bounds, strong-Wolfe line
search) with the analytic gradient of the profile likelihood.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .data import MixedDataset
from .gp import FitError, FittedModel, Hyperparameters, ProfileLikelihood, basis_matrix, numeric_view
from .latent import A_BOUND, LMGP, LVGP, ONEHOT, LatentMap, PriorEncoding, lvgp_structure

logger = logging.getLogger(__name__)

GP = "gp"
MODEL_KINDS = (GP, LMGP, LVGP)

OMEGA_BOUNDS = (-8.0, 3.0)
LOG10_DELTA_BOUNDS = (-10.0, -1.0)
TIE_TOL = 1e-9
INFEASIBLE = 1e30


@dataclass(frozen=True)
class FitConfig:
    n_starts: int = 12
    max_iter: int = 500
    gtol: float = 1e-6
    ftol: float = 1e-10
    seed: int = 0
    continuation: bool = True
    prior: str = ONEHOT
    prior_seed: int = 0
    prior_columns: int | None = None
    nan_strategy: str = "zero"
    nan_seed: int = 0
    d_z: int = 2
    basis: str = "constant"
    omega_bounds: tuple[float, float] = OMEGA_BOUNDS
    log10_delta_bounds: tuple[float, float] = LOG10_DELTA_BOUNDS

    @classmethod
    def from_dict(cls, d: dict | None) -> "FitConfig":
        d = dict(d or {})
        for k in ("omega_bounds", "log10_delta_bounds"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StartResult:
    start: np.ndarray
    x: np.ndarray
    objective: float
    iterations: int
    reason: str


@dataclass
class OptimizationReport:
    best_params: np.ndarray
    best_objective: float
    per_start: list[StartResult]
    seed: int


class Parameterization:
    """Packs ``(omega, A, delta)`` into the flat vector seen by the optimizer."""

    def __init__(self, d_omega: int, latent: LatentMap | None = None, mask=None, lower=None, upper=None,
                 omega_bounds=OMEGA_BOUNDS, log10_delta_bounds=LOG10_DELTA_BOUNDS):
        self.d_omega = d_omega
        self.latent = latent
        if latent is not None:
            shape = latent.A.shape
            self.mask = np.ones(shape, bool) if mask is None else np.asarray(mask, bool)
            self.lower_A = np.full(shape, -A_BOUND) if lower is None else np.asarray(lower, float)
            self.upper_A = np.full(shape, A_BOUND) if upper is None else np.asarray(upper, float)
        else:
            self.mask = np.zeros((0, 0), bool)
        self.n_map = int(self.mask.sum())
        lo = [omega_bounds[0]] * d_omega
        hi = [omega_bounds[1]] * d_omega
        if latent is not None:
            lo += list(self.lower_A[self.mask])
            hi += list(self.upper_A[self.mask])
        lo.append(log10_delta_bounds[0])
        hi.append(log10_delta_bounds[1])
        self.lower = np.array(lo, float)
        self.upper = np.array(hi, float)

    @property
    def size(self) -> int:
        return self.d_omega + self.n_map + 1

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lower, self.upper))

    def unpack(self, theta):
        theta = np.asarray(theta, float)
        omega = theta[: self.d_omega]
        A = None
        if self.latent is not None:
            A = np.zeros(self.mask.shape)
            A[self.mask] = theta[self.d_omega:self.d_omega + self.n_map]
        return omega, A, 10.0 ** theta[-1]

    def pack(self, omega, A=None, delta=1e-4) -> np.ndarray:
        parts = [np.asarray(omega, float).reshape(-1)]
        if self.latent is not None:
            parts.append(np.asarray(A, float)[self.mask])
        parts.append([math.log10(delta)])
        return np.concatenate(parts)

    def hypers(self, theta) -> Hyperparameters:
        omega, A, delta = self.unpack(theta)
        return Hyperparameters(omega, None if A is None else self.latent.with_A(A), delta)

    def chain(self, grads) -> np.ndarray:
        g_omega, g_A, g_logdelta = grads
        parts = [g_omega]
        if self.latent is not None:
            parts.append(g_A[self.mask])
        parts.append([g_logdelta])
        return np.concatenate(parts)

    def center(self, rng: np.random.Generator) -> np.ndarray:
        """Default start: omega = 0, small random map entries, delta = 1e-4."""
        A = None
        if self.latent is not None:
            A = np.clip(rng.uniform(-0.1, 0.1, self.mask.shape), self.lower_A, self.upper_A)
            A = np.where(self.lower_A >= 0, np.abs(A), A)
        return np.clip(self.pack(np.zeros(self.d_omega), A, 1e-4), self.lower, self.upper)


class LikelihoodObjective:
    """Profile likelihood as a function of the packed parameter vector."""

    def __init__(self, problem: ProfileLikelihood, param: Parameterization):
        self.problem = problem
        self.param = param

    def __call__(self, theta) -> float:
        omega, A, delta = self.param.unpack(theta)
        return self.problem.evaluate(omega, A, delta)

    def gradient(self, theta) -> np.ndarray | None:
        omega, A, delta = self.param.unpack(theta)
        _, grads = self.problem.evaluate(omega, A, delta, gradient=True)
        return None if grads is None else self.param.chain(grads)

    def value_and_grad(self, theta):
        omega, A, delta = self.param.unpack(theta)
        value, grads = self.problem.evaluate(omega, A, delta, gradient=True)
        if not math.isfinite(value):
            return INFEASIBLE, np.zeros(self.param.size)
        if grads is None:
            return value, finite_difference_gradient(self, theta)
        return value, self.param.chain(grads)


def finite_difference_gradient(f: Callable, theta, step: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, float)
    g = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def likelihood_gradient(theta, objective: LikelihoodObjective) -> np.ndarray | None:
    """Analytic gradient of the profile likelihood at a packed parameter vector.

    Returns None when ``R_delta`` cannot be factorized or inverted.
    """
    return objective.gradient(theta)


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class PreparedData:
    X: np.ndarray
    y: np.ndarray
    y_mean: float
    y_std: float
    Zeta: np.ndarray | None
    F: np.ndarray


def build_objective(data: MixedDataset, kind: str, config: FitConfig = FitConfig()):
    """Standardize ``data`` and assemble the objective for a model kind."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if data.y is None:
        raise ValueError("dataset has no responses")
    s = data.schema
    Xs = (data.X - s.lower) / (s.upper - s.lower)
    y_mean = float(np.mean(data.y))
    y_std = float(np.std(data.y))
    if not y_std > 0:
        y_std = 1.0
    ys = (data.y - y_mean) / y_std
    F = basis_matrix(config.basis, Xs)
    latent, mask, lo, hi, Zeta = None, None, None, None, None
    if kind == GP or s.d_t == 0:
        Xf = numeric_view(s, Xs, data.T) if kind == GP else Xs
        if np.isnan(Xf).any():
            raise ValueError("plain GP cannot represent NaN levels; use an LMGP")
    else:
        Xf = Xs
        if kind == LMGP:
            enc = PriorEncoding(s.categorical, config.prior, config.prior_seed, config.prior_columns,
                                config.nan_strategy, config.nan_seed)
            latent = LatentMap(LMGP, enc, np.zeros((enc.p, config.d_z)), config.d_z)
        else:
            if np.isnan(data.T).any():
                raise ValueError("LVGP does not support variable-length inputs")
            enc = PriorEncoding(s.categorical, ONEHOT)
            latent = LatentMap(LVGP, enc, np.zeros((enc.p, s.d_t * config.d_z)), config.d_z)
            mask, lo, hi = lvgp_structure(s.categorical, config.d_z)
        Zeta = enc.rows(data.T)
    param = Parameterization(Xf.shape[1], latent, mask, lo, hi, config.omega_bounds, config.log10_delta_bounds)
    problem = ProfileLikelihood(Xf, ys, Zeta, F)
    prepared = PreparedData(Xf, ys, y_mean, y_std, Zeta, F)
    return LikelihoodObjective(problem, param), prepared


# ---------------------------------------------------------------------------
# optimization


def _run_lbfgsb(fun, jac, x0, bounds, max_iter, gtol, ftol):
    if jac is True:
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol, "maxcor": 10})
    else:
        res = minimize(fun, x0, jac=jac, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol, "maxcor": 10})
    return res


def minimize_multistart(objective: Callable, gradient, bounds: Sequence[tuple[float, float]],
                        n_starts: int = 12, seed: int = 0, *, starts: Sequence | None = None,
                        max_iter: int = 500, gtol: float = 1e-6, ftol: float = 1e-10,
                        tie_break: Callable | None = None) -> OptimizationReport:
    """Bounded quasi-Newton descent from several starting points.

    ``gradient`` is either a callable returning the gradient, or ``True`` when
    ``objective`` returns ``(value, gradient)``.  Starts are drawn uniformly in
    the box, one RNG stream per start index; explicit ``starts`` replace the
    first random ones.  A start whose objective is not finite is redrawn up to
    10 times, then skipped.  Among results within 1e-9 of the best,
    ``tie_break(x)`` picks the smallest.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    lo = np.array([b[0] for b in bounds], float)
    hi = np.array([b[1] for b in bounds], float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("bounds must be finite")
    value_only = (lambda x: objective(x)[0]) if gradient is True else objective
    explicit = list(starts or [])
    results: list[StartResult] = []
    for i in range(max(n_starts, len(explicit))):
        rng = np.random.default_rng([seed, i])
        x0 = np.clip(np.asarray(explicit[i], float), lo, hi) if i < len(explicit) else rng.uniform(lo, hi)
        tries = 0
        while not (math.isfinite(v0 := value_only(x0)) and v0 < INFEASIBLE):
            tries += 1
            if tries > 10:
                break
            x0 = rng.uniform(lo, hi)
        if tries > 10:
            logger.debug("start %d skipped: objective not finite after 10 redraws", i)
            continue
        res = _run_lbfgsb(objective, gradient, x0, list(zip(lo, hi)), max_iter, gtol, ftol)
        fx = float(res.fun)
        if not math.isfinite(fx) or fx >= INFEASIBLE:
            continue
        results.append(StartResult(x0, np.clip(res.x, lo, hi), fx, int(res.nit), str(res.message)))
    if not results:
        raise FitError("all starts were infeasible")
    best_val = min(r.objective for r in results)
    near = [r for r in results if r.objective - best_val < TIE_TOL]
    best = min(near, key=lambda r: tie_break(r.x)) if tie_break else near[0]
    return OptimizationReport(best.x.copy(), best.objective, results, seed)


def fit_with_continuation(data: MixedDataset, model_kind: str = LMGP, config: FitConfig = FitConfig(),
                          warm_start: Hyperparameters | None = None) -> FittedModel:
    """Fit a GP, LMGP or LVGP by multi-start MLE with nugget continuation.

    After the multi-start search (random starts draw log10(delta) uniformly
    over its bounds) two refinement passes restart from the incumbent with
    delta reset to its upper bound and to a tenth of the incumbent value; the
    lowest objective wins.
    """
    t0 = time.perf_counter()
    obj, prep = build_objective(data, model_kind, config)
    param = obj.param
    center = param.center(np.random.default_rng([config.seed, 10_000]))
    starts = [center]
    if warm_start is not None:
        starts.append(_pack_warm(param, warm_start))
    n_starts = max(config.n_starts, len(starts))
    tie = lambda x: x[-1]  # noqa: E731  smaller delta wins ties
    report = minimize_multistart(obj.value_and_grad, True, param.bounds, n_starts, config.seed,
                                 starts=starts, max_iter=config.max_iter, gtol=config.gtol,
                                 ftol=config.ftol, tie_break=tie)
    runs = list(report.per_start)
    best_x, best_f = report.best_params, report.best_objective
    if config.continuation:
        for logd in (param.upper[-1], best_x[-1] - 1.0):
            x0 = best_x.copy()
            x0[-1] = np.clip(logd, param.lower[-1], param.upper[-1])
            res = _run_lbfgsb(obj.value_and_grad, True, x0, param.bounds, config.max_iter, config.gtol, config.ftol)
            x = np.clip(res.x, param.lower, param.upper)
            runs.append(StartResult(x0, x, float(res.fun), int(res.nit), str(res.message)))
            if res.fun < best_f - TIE_TOL or (abs(res.fun - best_f) < TIE_TOL and x[-1] < best_x[-1]):
                best_x, best_f = x, float(res.fun)
    info = {"n_starts": n_starts, "seed": config.seed, "fit_seconds": time.perf_counter() - t0,
            "starts": [(r.objective, r.iterations, r.reason) for r in runs]}
    return _assemble(obj, prep, model_kind, param.hypers(best_x), data, config.basis, best_f, info)


def _assemble(obj, prep, kind, hypers, data, basis, objective, info) -> FittedModel:
    A = None if hypers.latent is None else hypers.latent.A
    Lf, beta, s2, alpha = obj.problem.estimates(hypers.omega, A, hypers.delta)
    return FittedModel(kind, hypers, beta, s2, data, Lf, alpha, prep.y_mean, prep.y_std, basis, objective, info)


def model_from_hypers(data: MixedDataset, kind: str, hypers: Hyperparameters, basis: str = "constant",
                      objective: float = math.nan) -> FittedModel:
    """Rebuild a fitted model from its training data and hyperparameters."""
    lm = hypers.latent
    cfg = FitConfig(basis=basis)
    if lm is not None:
        e = lm.encoding
        cfg = replace(cfg, prior=e.strategy, prior_seed=e.seed, prior_columns=e.n_columns,
                      nan_strategy=e.nan_strategy, nan_seed=e.nan_seed, d_z=lm.d_z)
    obj, prep = build_objective(data, kind, cfg)
    return _assemble(obj, prep, kind, hypers, data, basis, objective, {})


def _pack_warm(param: Parameterization, h: Hyperparameters) -> np.ndarray:
    A = None if h.latent is None else h.latent.A
    delta = min(max(h.delta, 10.0 ** param.lower[-1]), 10.0 ** param.upper[-1])
    return np.clip(param.pack(h.omega, A, delta), param.lower, param.upper)


def fit(data: MixedDataset, kind: str = LMGP, config: FitConfig | None = None, **overrides) -> FittedModel:
    """Convenience wrapper: ``fit(data, "lmgp", seed=3)``."""
    config = replace(config or FitConfig(), **overrides)
    return fit_with_continuation(data, kind, config)
