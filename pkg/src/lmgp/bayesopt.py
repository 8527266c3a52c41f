"""Expected improvement and pool-based Bayesian optimization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .data import MixedDataset, read_dataset_csv
from .gp import FitError, FittedModel, Hyperparameters
from .optimize import FitConfig, fit_with_continuation

MAXIMIZE = "maximize"
MINIMIZE = "minimize"
DIRECTIONS = (MAXIMIZE, MINIMIZE)


class PoolExhausted(RuntimeError):
    """Raised when every candidate in a pool has been evaluated."""


def _sign(direction: str) -> float:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return 1.0 if direction == MAXIMIZE else -1.0


def expected_improvement(mu, sigma, y_best, direction: str = MAXIMIZE):
    """Closed-form expected improvement over ``y_best``.

    With ``s = +1`` for maximization and ``-1`` for minimization the
    improvement is ``max(s (y - y_best), 0)`` for ``y ~ N(mu, sigma^2)``.
    Scalars in, float out; arrays in, array out.
    """
    s = _sign(direction)
    mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    gain = s * (mu - y_best)
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    u = gain / safe
    ei = np.where(pos, gain * norm.cdf(u) + safe * norm.pdf(u), np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


@dataclass
class CandidatePool:
    """A finite set of candidate inputs, optionally with known responses."""

    data: MixedDataset
    evaluated: np.ndarray = None

    def __post_init__(self):
        if self.evaluated is None:
            self.evaluated = np.zeros(self.data.n, dtype=bool)
        self.evaluated = np.asarray(self.evaluated, dtype=bool).copy()

    def __len__(self) -> int:
        return self.data.n

    @property
    def responses(self) -> np.ndarray | None:
        return self.data.y

    def unevaluated(self) -> np.ndarray:
        return np.flatnonzero(~self.evaluated)

    def mark(self, i: int) -> None:
        if self.evaluated[i]:
            raise ValueError(f"candidate {i} was already evaluated")
        self.evaluated[i] = True

    def fresh(self) -> "CandidatePool":
        return CandidatePool(self.data)

    def target_indices(self, direction: str = MAXIMIZE) -> np.ndarray:
        """Indices attaining the known pool optimum."""
        if self.data.y is None:
            raise ValueError("pool has no responses")
        y = self.data.y
        best = y.max() if direction == MAXIMIZE else y.min()
        return np.flatnonzero(y == best)


def load_candidate_csv(path) -> CandidatePool:
    """Read a candidate pool from a dataset CSV; the schema is inferred."""
    return CandidatePool(read_dataset_csv(path))


def bo_step(model: FittedModel, pool: CandidatePool, direction: str = MAXIMIZE,
            y_best: float | None = None) -> int:
    """Index of the unevaluated candidate with the largest EI (lowest index on ties)."""
    idx = pool.unevaluated()
    if idx.size == 0:
        raise PoolExhausted("every candidate in the pool has been evaluated")
    if y_best is None:
        seen = pool.data.y[pool.evaluated]
        y_best = float(seen.max() if direction == MAXIMIZE else seen.min())
    mu, var = model.predict(pool.data.X[idx], pool.data.T[idx])
    ei = expected_improvement(mu, np.sqrt(var), y_best, direction)
    return int(idx[int(np.argmax(ei))])


@dataclass(frozen=True)
class Budget:
    """Stop after ``k`` additional evaluations."""

    k: int


TARGET_FOUND = "target"


@dataclass
class BoStep:
    iteration: int
    index: int
    y: float
    incumbent: float


@dataclass
class BoTrajectory:
    """Evaluation history of one BO (or random-search) run.

    ``steps`` lists the initial draw first (iteration 0) followed by one entry
    per additional evaluation.
    """

    init_size: int
    direction: str
    steps: list[BoStep] = field(default_factory=list)
    found_at: int | None = None
    aborted: bool = False
    message: str = ""

    @property
    def additional(self) -> list[BoStep]:
        return [s for s in self.steps if s.iteration > 0]

    @property
    def n_additional(self) -> int:
        """Additional evaluations until the target was found (or performed so far)."""
        return self.found_at if self.found_at is not None else len(self.additional)

    def incumbents(self) -> np.ndarray:
        return np.array([s.incumbent for s in self.steps])


def _better(a: float, b: float, direction: str) -> float:
    return max(a, b) if direction == MAXIMIZE else min(a, b)


def _initial_draw(pool: CandidatePool, init_size: int, rng: np.random.Generator,
                  exclude: np.ndarray | None) -> np.ndarray:
    allowed = np.arange(len(pool))
    if exclude is not None and exclude.size:
        allowed = np.setdiff1d(allowed, exclude)
    if init_size > allowed.size:
        raise ValueError("init_size exceeds the number of eligible candidates")
    return np.sort(rng.choice(allowed, size=init_size, replace=False))


def _start(pool, init_size, direction, seed, exclude_target):
    if not 0 < init_size < len(pool):
        raise ValueError("need 0 < init_size < pool size")
    if pool.data.y is None:
        raise ValueError("pool has no responses to reveal")
    pool = pool.fresh()
    targets = pool.target_indices(direction)
    rng = np.random.default_rng(seed)
    init = _initial_draw(pool, init_size, rng, targets if exclude_target else None)
    traj = BoTrajectory(init_size, direction)
    best = math.nan
    for i in init:
        pool.mark(i)
        y = float(pool.data.y[i])
        best = y if math.isnan(best) else _better(best, y, direction)
        traj.steps.append(BoStep(0, int(i), y, best))
    if np.isin(targets, init).any():
        traj.found_at = 0
    return pool, targets, rng, traj, best


def _stop(traj: BoTrajectory, stop, n_done: int) -> bool:
    if isinstance(stop, Budget):
        return n_done >= stop.k
    return traj.found_at is not None


def _reveal(pool, traj, targets, i, it, best, direction):
    pool.mark(i)
    y = float(pool.data.y[i])
    best = _better(best, y, direction)
    traj.steps.append(BoStep(it, int(i), y, best))
    if traj.found_at is None and i in targets:
        traj.found_at = it
    return best


def _fit_seed(seed: int, iteration: int, attempt: int) -> int:
    return int(np.random.SeedSequence([seed, iteration, attempt]).generate_state(1)[0])


def bo_run(pool: CandidatePool, init_size: int, model_kind: str = "lmgp", direction: str = MAXIMIZE,
           seed: int = 0, stop=TARGET_FOUND, config: FitConfig | None = None, warm_start: bool = False,
           exclude_target: bool = False) -> BoTrajectory:
    """Run EI-driven BO over a pool with known responses.

    Each iteration refits the model on every evaluated candidate, picks the
    EI maximizer and reveals its response. ``stop`` is ``"target"`` (stop once
    the pool optimum has been evaluated) or ``Budget(k)``. A failed fit is
    retried once with fresh starts; a second failure ends the run with
    ``aborted=True``.
    """
    _sign(direction)
    config = config or FitConfig()
    pool, targets, _, traj, best = _start(pool, init_size, direction, seed, exclude_target)
    hypers: Hyperparameters | None = None
    it = 0
    while not _stop(traj, stop, it) and pool.unevaluated().size:
        it += 1
        train = pool.data.subset(np.flatnonzero(pool.evaluated))
        model = None
        for attempt in range(2):
            cfg = replace(config, seed=_fit_seed(seed, it, attempt))
            try:
                model = fit_with_continuation(train, model_kind, cfg, hypers if warm_start else None)
                break
            except FitError as exc:
                traj.message = str(exc)
        if model is None:
            traj.aborted = True
            break
        hypers = model.hypers
        i = bo_step(model, pool, direction, best)
        best = _reveal(pool, traj, targets, i, it, best, direction)
    return traj


def random_search_run(pool: CandidatePool, init_size: int, direction: str = MAXIMIZE, seed: int = 0,
                      stop=TARGET_FOUND, exclude_target: bool = False) -> BoTrajectory:
    """Baseline: same initial draw as :func:`bo_run`, then uniformly random order."""
    _sign(direction)
    pool, targets, rng, traj, best = _start(pool, init_size, direction, seed, exclude_target)
    order = rng.permutation(pool.unevaluated())
    it = 0
    for i in order:
        if _stop(traj, stop, it):
            break
        it += 1
        best = _reveal(pool, traj, targets, int(i), it, best, direction)
    return traj


def write_trajectory_csv(traj: BoTrajectory, path, comment: str | None = None) -> None:
    """Write ``iter,combo,y,incumbent``; ``combo`` is the candidate's row index in the pool."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "combo", "y", "incumbent"])
        for s in traj.steps:
            w.writerow([s.iteration, s.index, repr(s.y), repr(s.incumbent)])
