"""Input schemas, mixed-variable datasets and their CSV representation."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class SchemaError(ValueError):
    """Raised when data does not conform to a declared schema."""


class ParseError(ValueError):
    """Raised on malformed CSV input; the message names the offending line."""


@dataclass(frozen=True)
class NumericVariable:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.upper > self.lower:
            raise SchemaError(f"{self.name}: upper bound must exceed lower bound")


@dataclass(frozen=True)
class CategoricalVariable:
    name: str
    levels: tuple[str, ...]
    nan_allowed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(lv) for lv in self.levels))
        if len(self.levels) < 2:
            raise SchemaError(f"{self.name}: a categorical variable needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"{self.name}: level labels must be unique")

    @property
    def m(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class CategoricalSchema:
    """The qualitative part of an input space.

    Levels are addressed by 1-based indices in declaration order; NaN marks a
    variable that is not an input for a given combination.
    """

    variables: tuple[CategoricalVariable, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def d_t(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> tuple[int, ...]:
        return tuple(v.m for v in self.variables)

    @property
    def total_levels(self) -> int:
        return int(sum(self.m))

    @property
    def n_combinations(self) -> int:
        return int(math.prod(self.m)) if self.variables else 0

    @property
    def offsets(self) -> np.ndarray:
        """Column offset of each variable's block in a grouped one-hot row."""
        return np.concatenate([[0], np.cumsum(self.m)[:-1]]).astype(int) if self.variables else np.zeros(0, int)

    def combinations(self) -> Iterator[tuple[int, ...]]:
        """All full level combinations, last variable varying fastest."""
        return itertools.product(*(range(1, m + 1) for m in self.m))

    def combo_index(self, combo: Sequence[float]) -> int:
        """Row of ``combo`` in :meth:`combinations` order (full combos only)."""
        idx = 0
        for level, m in zip(combo, self.m):
            idx = idx * m + (int(level) - 1)
        return idx

    def validate_combo(self, combo: Sequence[float]) -> None:
        if len(combo) != self.d_t:
            raise SchemaError(f"expected {self.d_t} level indices, got {len(combo)}")
        for level, var in zip(combo, self.variables):
            if level is None or (isinstance(level, float) and math.isnan(level)):
                if not var.nan_allowed:
                    raise SchemaError(f"{var.name}: NaN level not permitted")
                continue
            if level != int(level) or not 1 <= int(level) <= var.m:
                raise SchemaError(f"{var.name}: level {level} outside 1..{var.m}")

    def label(self, combo: Sequence[float]) -> str:
        """Slash-joined level labels; NaN levels render as ``NaN``."""
        parts = []
        for level, var in zip(combo, self.variables):
            parts.append("NaN" if _isnan(level) else var.levels[int(level) - 1])
        return "/".join(parts)


@dataclass(frozen=True)
class Schema:
    numeric: tuple[NumericVariable, ...] = ()
    categorical: CategoricalSchema = field(default_factory=CategoricalSchema)

    def __post_init__(self):
        object.__setattr__(self, "numeric", tuple(self.numeric))
        if not isinstance(self.categorical, CategoricalSchema):
            object.__setattr__(self, "categorical", CategoricalSchema(tuple(self.categorical)))

    @property
    def d_x(self) -> int:
        return len(self.numeric)

    @property
    def d_t(self) -> int:
        return self.categorical.d_t

    @property
    def lower(self) -> np.ndarray:
        return np.array([v.lower for v in self.numeric], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([v.upper for v in self.numeric], dtype=float)

    def to_dict(self) -> dict:
        return {
            "numeric": [[v.name, v.lower, v.upper] for v in self.numeric],
            "categorical": [
                {"name": v.name, "levels": list(v.levels), "nan_allowed": v.nan_allowed}
                for v in self.categorical.variables
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        numeric = tuple(NumericVariable(n, float(lo), float(hi)) for n, lo, hi in d.get("numeric", []))
        cat = CategoricalSchema(
            tuple(
                CategoricalVariable(c["name"], tuple(c["levels"]), bool(c.get("nan_allowed", False)))
                for c in d.get("categorical", [])
            )
        )
        return cls(numeric, cat)


def _isnan(v) -> bool:
    return v is None or (isinstance(v, (float, np.floating)) and math.isnan(v))


@dataclass(frozen=True)
class MixedSample:
    """One input point ``w = [x; t]``; NaN entries of ``t`` mark absent variables."""

    x: tuple[float, ...]
    t: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "t", tuple(float(v) for v in self.t))


@dataclass
class MixedDataset:
    """``n`` samples of (x, t, y).

    ``X`` has shape (n, d_x); ``T`` holds 1-based level indices as floats so
    that absent variables can be stored as NaN; ``y`` may be None for inputs
    awaiting evaluation.
    """

    schema: Schema
    X: np.ndarray
    T: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.X) if self.X is not None else len(self.T)
        self.X = np.asarray(self.X, dtype=float).reshape(n, self.schema.d_x)
        self.T = np.asarray(self.T, dtype=float).reshape(n, self.schema.d_t)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float).reshape(-1)
            if len(self.y) != n:
                raise SchemaError(f"{n} inputs but {len(self.y)} responses")
        cat = self.schema.categorical
        for j, var in enumerate(cat.variables):
            col = self.T[:, j]
            nan = np.isnan(col)
            if nan.any() and not var.nan_allowed:
                raise SchemaError(f"{var.name}: NaN level not permitted")
            ok = col[~nan]
            if ok.size and (np.any(ok != np.round(ok)) or ok.min() < 1 or ok.max() > var.m):
                raise SchemaError(f"{var.name}: level index outside 1..{var.m}")

    @property
    def n(self) -> int:
        return len(self.X)

    def sample(self, i: int) -> MixedSample:
        return MixedSample(tuple(self.X[i]), tuple(self.T[i]))

    def subset(self, idx) -> "MixedDataset":
        idx = np.asarray(idx)
        return MixedDataset(self.schema, self.X[idx], self.T[idx], None if self.y is None else self.y[idx])

    def with_y(self, y) -> "MixedDataset":
        return MixedDataset(self.schema, self.X.copy(), self.T.copy(), np.asarray(y, dtype=float))

    def has_duplicates(self) -> bool:
        W = np.nan_to_num(np.hstack([self.X, self.T]), nan=-1.0)
        return len(np.unique(W, axis=0)) < len(W)


def dataset_from_samples(schema: Schema, samples: Sequence[MixedSample], y=None) -> MixedDataset:
    X = np.array([s.x for s in samples], dtype=float).reshape(len(samples), schema.d_x)
    T = np.array([s.t for s in samples], dtype=float).reshape(len(samples), schema.d_t)
    return MixedDataset(schema, X, T, y)


def _fmt(v: float) -> str:
    return "NaN" if math.isnan(v) else repr(float(v))


def write_dataset_csv(data: MixedDataset, path, comment: str | None = None) -> None:
    """Write ``x1..x{d_x},t1..t{d_t},y``; levels as integer indices or ``NaN``."""
    header = [f"x{i + 1}" for i in range(data.schema.d_x)] + [f"t{j + 1}" for j in range(data.schema.d_t)]
    if data.y is not None:
        header.append("y")
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            row = [_fmt(v) for v in data.X[i]]
            row += ["NaN" if math.isnan(v) else str(int(v)) for v in data.T[i]]
            if data.y is not None:
                row.append(_fmt(data.y[i]))
            w.writerow(row)


def read_dataset_csv(path, schema: Schema | None = None) -> MixedDataset:
    """Parse a dataset CSV.

    Without a schema one is inferred from the header: numeric ranges from the
    observed column extremes, categorical levels labelled ``1..max`` (a
    categorical column that contains NaN is marked ``nan_allowed``).
    Lines starting with ``#`` are comments.
    """
    path = Path(path)
    rows: list[tuple[int, list[str]]] = []
    header = None
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip() or raw.lstrip().startswith("#"):
                continue
            cells = next(csv.reader([raw]))
            if header is None:
                header = [c.strip() for c in cells]
                continue
            if len(cells) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
            rows.append((lineno, cells))
    if header is None:
        raise ParseError(f"{path}: empty file")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    tcols = [i for i, h in enumerate(header) if h.startswith("t")]
    ycol = header.index("y") if "y" in header else None
    unknown = set(range(len(header))) - set(xcols) - set(tcols) - ({ycol} if ycol is not None else set())
    if unknown:
        raise ParseError(f"{path}:1: unrecognised columns {[header[i] for i in sorted(unknown)]}")

    n = len(rows)
    X = np.empty((n, len(xcols)))
    T = np.empty((n, len(tcols)))
    y = np.empty(n) if ycol is not None else None
    for r, (lineno, cells) in enumerate(rows):
        try:
            X[r] = [float(cells[i]) for i in xcols]
            for k, i in enumerate(tcols):
                c = cells[i].strip()
                if c.lower() == "nan":
                    T[r, k] = np.nan
                else:
                    v = float(c)
                    if v != int(v):
                        raise ValueError(f"non-integer level {c!r}")
                    T[r, k] = v
            if y is not None:
                y[r] = float(cells[ycol])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None

    if schema is None:
        numeric = []
        for k, i in enumerate(xcols):
            lo, hi = (X[:, k].min(), X[:, k].max()) if n else (0.0, 1.0)
            if hi <= lo:
                hi = lo + 1.0
            numeric.append(NumericVariable(header[i], float(lo), float(hi)))
        cats = []
        for k, i in enumerate(tcols):
            col = T[:, k]
            top = int(np.nanmax(col)) if np.isfinite(col).any() else 2
            cats.append(CategoricalVariable(header[i], tuple(str(j) for j in range(1, max(top, 2) + 1)),
                                            bool(np.isnan(col).any())))
        schema = Schema(tuple(numeric), CategoricalSchema(tuple(cats)))
    elif schema.d_x != len(xcols) or schema.d_t != len(tcols):
        raise SchemaError(f"{path}: header has {len(xcols)} numeric / {len(tcols)} categorical columns, "
                          f"schema expects {schema.d_x} / {schema.d_t}")
    return MixedDataset(schema, X, T, y)
