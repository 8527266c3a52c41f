"""Analytic benchmark functions with some inputs turned into categorical variables.

Each categorical level stands for a hidden numeric value; the models only
ever see the level index.  Variables are listed in the order of the input
table for each function, and ``lower``/``upper`` for categorical variables
are level-index ranges.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..data import CategoricalSchema, CategoricalVariable, NumericVariable, Schema

RANGE_TOL = 1e-9


@dataclass(frozen=True)
class BenchmarkFunction:
    id: int
    name: str
    variables: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    levels: Mapping[str, tuple[float, ...]]
    formula: Callable[[dict], np.ndarray] = field(repr=False)
    nan_values: Mapping[str, float] = field(default_factory=dict)
    aliases: tuple[str, ...] = ()

    @property
    def categorical(self) -> tuple[str, ...]:
        return tuple(v for v in self.variables if v in self.levels)

    @property
    def numeric(self) -> tuple[str, ...]:
        return tuple(v for v in self.variables if v not in self.levels)

    @property
    def d_x(self) -> int:
        return len(self.numeric)

    @property
    def d_t(self) -> int:
        return len(self.categorical)

    @property
    def n_combinations(self) -> int:
        return math.prod(len(self.levels[v]) for v in self.categorical)

    def bounds(self, name: str) -> tuple[float, float]:
        i = self.variables.index(name)
        return self.lower[i], self.upper[i]

    @functools.cached_property
    def schema(self) -> Schema:
        numeric = tuple(NumericVariable(v, *self.bounds(v)) for v in self.numeric)
        cats = tuple(
            CategoricalVariable(v, tuple(str(i + 1) for i in range(len(self.levels[v]))), v in self.nan_values)
            for v in self.categorical
        )
        return Schema(numeric, CategoricalSchema(cats))

    def level_value(self, variable: str, level: int) -> float:
        if variable not in self.levels:
            raise ValueError(f"{self.name} has no categorical variable {variable!r}")
        vals = self.levels[variable]
        if level != int(level) or not 1 <= int(level) <= len(vals):
            raise ValueError(f"{self.name}.{variable} has no level {level}")
        return float(vals[int(level) - 1])

    def physical_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-variable ranges with categoricals spanning their level values."""
        lo, hi = [], []
        for v in self.variables:
            if v in self.levels:
                lo.append(min(self.levels[v]))
                hi.append(max(self.levels[v]))
            else:
                a, b = self.bounds(v)
                lo.append(a)
                hi.append(b)
        return np.array(lo, float), np.array(hi, float)

    def evaluate_physical(self, V) -> np.ndarray:
        """Evaluate on raw values, one column per entry of :attr:`variables`."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        return np.asarray(self.formula({v: V[:, i] for i, v in enumerate(self.variables)}), dtype=float)

    def to_physical(self, X, T) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.d_x)
        T = np.atleast_2d(np.asarray(T, dtype=float)).reshape(len(X), self.d_t)
        for j, v in enumerate(self.numeric):
            lo, hi = self.bounds(v)
            span = RANGE_TOL * max(1.0, abs(hi - lo))
            bad = (X[:, j] < lo - span) | (X[:, j] > hi + span) | ~np.isfinite(X[:, j])
            if bad.any():
                raise ValueError(f"{self.name}.{v}: value {X[bad, j][0]} outside [{lo}, {hi}]")
        cols = {}
        for j, v in enumerate(self.numeric):
            cols[v] = X[:, j]
        for j, v in enumerate(self.categorical):
            col = T[:, j]
            vals = np.asarray(self.levels[v], dtype=float)
            nan = np.isnan(col)
            if nan.any() and v not in self.nan_values:
                raise ValueError(f"{self.name}.{v}: NaN level not allowed")
            idx = np.where(nan, 1, col)
            if np.any(idx != np.round(idx)) or idx.min() < 1 or idx.max() > len(vals):
                raise ValueError(f"{self.name}.{v}: level outside 1..{len(vals)}")
            cols[v] = np.where(nan, self.nan_values.get(v, np.nan), vals[idx.astype(int) - 1])
        return np.column_stack([cols[v] for v in self.variables])

    def evaluate(self, X, T) -> np.ndarray:
        return self.evaluate_physical(self.to_physical(X, T))


# -- formulas ---------------------------------------------------------------


def _olt(v):
    Rb1, Rb2, Rf, Rc1, Rc2, beta = (v[k] for k in ("R_b1", "R_b2", "R_f", "R_c1", "R_c2", "beta"))
    Vb1 = 12.0 * Rb2 / (Rb1 + Rb2)
    bR = beta * (Rc2 + 9.0)
    return ((Vb1 + 0.74) * bR + 11.35 * Rf) / (bR + Rf) + 0.74 * Rf * bR / ((bR + Rf) * Rc1)


def _piston(v):
    M, S, V0, k, P0, T, T0 = (v[k] for k in ("M", "S", "V_0", "k", "P_0", "T", "T_0"))
    A = P0 * S + 19.62 * M - k * V0 / S
    V = S / (2.0 * k) * (np.sqrt(A ** 2 + 4.0 * k * P0 * V0 * T / T0) - A)
    return 2.0 * np.pi * np.sqrt(M / (k + S ** 2 * P0 * V0 * T / (T0 * V ** 2)))


def _borehole(v):
    Tu, Hu, Hl, r, rw, Tl, L, Kw = (v[k] for k in ("T_u", "H_u", "H_l", "r", "r_w", "T_l", "L", "K_w"))
    lr = np.log(r / rw)
    return 2.0 * np.pi * Tu * (Hu - Hl) / (lr * (1.0 + 2.0 * L * Tu / (lr * rw ** 2 * Kw) + Tu / Tl))


def _effective_potential(v):
    x = [v[f"x{i}"] for i in range(1, 11)]
    eps = np.stack([
        np.stack([x[0], x[5], x[4]], -1),
        np.stack([x[5], x[1], x[3]], -1),
        np.stack([x[4], x[3], x[2]], -1),
    ], -2)
    em = np.trace(eps, axis1=-2, axis2=-1) / 3.0
    ed = eps - em[..., None, None] * np.eye(3)
    eeq = np.sqrt(2.0 / 3.0 * np.sum(ed * ed, axis=(-2, -1)))
    x7, x8, x9, x10 = x[6], x[7], x[8], x[9]
    return 100.0 * 4.5 * x9 * em ** 2 + x8 * x10 / (1.0 + x7) * (eeq / x10) ** (1.0 + x7)


def _wing_weight(v):
    Sw, Wfw, A, Lam, q, lam, tc, Nz, Wdg, Wp = (
        v[k] for k in ("S_w", "W_fw", "A", "Lambda", "q", "lambda", "t_c", "N_z", "W_dg", "W_p"))
    c = np.cos(np.deg2rad(Lam))
    return (0.036 * Sw ** 0.758 * Wfw ** 0.0035 * (A / c ** 2) ** 0.6 * q ** 0.006 * lam ** 0.04
            * (100.0 * tc / c) ** -0.3 * (Nz * Wdg) ** 0.49 + Sw * Wp)


def _custom(v):
    x = [None] + [v[f"x{i}"] for i in range(1, 9)]
    y = 4.0 * (x[1] - 2.0 + 8.0 * x[2] - 8.0 * x[2] ** 2) ** 2 + (3.0 - 4.0 * x[2]) ** 2
    y = y + 16.0 * np.sqrt(x[3] + 1.0) * (2.0 * x[3] - 1.0) ** 2
    for i in range(4, 9):
        y = y + np.log(1.0 + sum(x[j] for j in range(3, i + 1)))
    return y


FUNCTIONS: dict[int, BenchmarkFunction] = {
    1: BenchmarkFunction(
        1, "olt", ("R_b1", "R_b2", "R_f", "R_c1", "R_c2", "beta"),
        (1, 50, 1, 1.2, 0.01, 1), (3, 70, 3, 2.5, 5, 3),
        {"R_b1": (25, 32.5, 40), "R_f": (0.5, 2, 3), "beta": (1, 4, 5)},
        _olt, {"R_b1": 35, "R_f": 1, "beta": 2}, ("otl", "olt-circuit"),
    ),
    2: BenchmarkFunction(
        2, "piston", ("M", "S", "V_0", "k", "P_0", "T", "T_0"),
        (1, 1, 1, 2000, 2e5, 10, 10), (3, 3, 3, 3000, 1.5e6, 500, 760),
        {"M": (30, 40, 50), "S": (0.005, 1, 2), "V_0": (0.002, 0.4, 1)},
        _piston,
    ),
    3: BenchmarkFunction(
        3, "borehole", ("T_u", "H_u", "H_l", "r", "r_w", "T_l", "L", "K_w"),
        (100, 990, 700, 100, 0.05, 1, 1, 1), (1000, 1110, 820, 1e4, 0.15, 5, 3, 3),
        {"T_l": (10, 30, 100, 200, 500), "L": (1000, 1400, 2000), "K_w": (6000, 10000, 12000)},
        _borehole, {"T_l": 350, "L": 1100, "K_w": 8000},
    ),
    4: BenchmarkFunction(
        4, "effective-potential", tuple(f"x{i}" for i in range(1, 11)),
        (0, 0, 0, 0, 0, 0, 1, 1, 1, 1), (1, 1, 1, 1, 1, 1, 5, 5, 5, 5),
        {"x7": (0.1, 0.25, 0.7, 0.8, 1), "x8": (1, 2, 4, 9, 10),
         "x9": (5, 10, 12.5, 25, 30), "x10": (0.01, 0.02, 0.1, 0.3, 0.5)},
        _effective_potential,
    ),
    5: BenchmarkFunction(
        5, "wing-weight", ("S_w", "W_fw", "A", "Lambda", "q", "lambda", "t_c", "N_z", "W_dg", "W_p"),
        (1, 1, 6, -10, 16, 0.5, 1, 2.5, 1, 0.025), (3, 3, 10, 10, 45, 1, 3, 6, 3, 0.08),
        {"S_w": (150, 180, 200), "W_fw": (220, 250, 300), "t_c": (0.08, 0.12, 0.18), "W_dg": (1700, 2000, 2500)},
        _wing_weight,
    ),
    6: BenchmarkFunction(
        6, "custom", tuple(f"x{i}" for i in range(1, 9)),
        (0, 0, 1, 1, 0, 0, 0, 1), (1, 1, 6, 4, 1, 1, 1, 3),
        {"x3": (0, 0.1, 0.3, 0.6, 0.7, 1), "x4": (0, 0.2, 0.7, 1), "x8": (0, 0.4, 1)},
        _custom,
    ),
}


def get_function(key) -> BenchmarkFunction:
    """Look a benchmark up by id (``3``, ``"3"``) or name (``"borehole"``)."""
    if isinstance(key, BenchmarkFunction):
        return key
    try:
        return FUNCTIONS[int(key)]
    except (ValueError, TypeError, KeyError):
        pass
    for fn in FUNCTIONS.values():
        if key == fn.name or key in fn.aliases:
            return fn
    raise ValueError(f"unknown benchmark function {key!r}")


def eval_function(fid, w) -> float:
    fn = get_function(fid)
    return float(fn.evaluate([w.x], [w.t])[0])


def level_value(fid, variable: str, level: int) -> float:
    return get_function(fid).level_value(variable, level)


def l_over_kw(level_L: int, level_Kw: int) -> float:
    """Borehole ratio L/K_w for a pair of levels, rounded to 3 decimals."""
    fn = FUNCTIONS[3]
    return round(fn.level_value("L", level_L) / fn.level_value("K_w", level_Kw), 3)


# Variable-length augmentation used with the OLT circuit and borehole: the
# variable at ``drop`` is absent when the other two sit at the given levels.
VARLEN_PATTERN = (
    ({0: 1, 1: 1}, 2),
    ({0: 2, 2: 2}, 1),
    ({1: 3, 2: 3}, 0),
)
VARLEN_FUNCTIONS = (1, 3)


def apply_varlen_pattern(T) -> np.ndarray:
    """Mark absent categorical variables with NaN (three-variable schemas)."""
    T = np.array(T, dtype=float)
    if T.shape[1] != 3:
        raise ValueError("the variable-length pattern is defined for three categorical variables")
    out = T.copy()
    for cond, drop in VARLEN_PATTERN:
        hit = np.all([T[:, j] == lv for j, lv in cond.items()], axis=0)
        out[hit, drop] = np.nan
    return out


@functools.lru_cache(maxsize=None)
def function_range(fid, n: int = 2 ** 14) -> float:
    """Response range over a deterministic Sobol design of the mixed domain."""
    from .design import sample_mixed_design
    fn = get_function(fid)
    d = sample_mixed_design(fn, n)
    y = fn.evaluate(d.X, d.T)
    return float(np.max(y) - np.min(y))


def noise_presets(fid) -> tuple[float, float, float]:
    """Noise variances ``(0, (range/50)^2, (range/20)^2)`` used by the harness."""
    r = function_range(get_function(fid).id)
    return 0.0, (r / 50.0) ** 2, (r / 20.0) ** 2
