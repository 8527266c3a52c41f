"""Prior encodings of level combinations and their map into a latent space.

An LMGP places every level combination ``t`` at ``z(t) = zeta(t) @ A`` where
``zeta`` is a fixed prior row and ``A`` is learned.  LVGP, used as a baseline,
gives each categorical variable its own latent plane; it is expressed here as
the same product with a grouped one-hot prior and a block-diagonal ``A`` whose
gauge entries are pinned.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import CategoricalSchema, MixedDataset, _isnan

ONEHOT = "onehot"
RANDOM = "random"
LUMPED = "lumped"
STRATEGIES = (ONEHOT, RANDOM, LUMPED)

NAN_ZERO = "zero"
NAN_RANDOM = "random"

LMGP = "lmgp"
LVGP = "lvgp"

A_BOUND = 1.0
LVGP_BOUND = 5.0


def _combo_codes(combo) -> tuple[int, ...]:
    return tuple(0 if _isnan(v) else int(v) for v in combo)


def _keyed_rng(seed: int, tag: str, codes: tuple[int, ...]) -> np.random.Generator:
    # One stream per (seed, combination) so a combo always gets the same draws
    # regardless of which rows of a dataset happen to contain it.
    digest = hashlib.sha256(f"{tag}:{codes}".encode()).digest()
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")])


@dataclass(frozen=True)
class PriorEncoding:
    """Prior rows ``zeta(t)`` for every level combination of a schema.

    ``strategy`` is one of ``onehot`` (grouped one-hot), ``random`` (IID
    Uniform(0, 1) from ``seed``) or ``lumped`` (one indicator per combination).
    ``nan_strategy`` decides how the block of an absent variable is filled.
    """

    schema: CategoricalSchema
    strategy: str = ONEHOT
    seed: int = 0
    n_columns: int | None = None
    nan_strategy: str = NAN_ZERO
    nan_seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown prior strategy {self.strategy!r}")
        if self.nan_strategy not in (NAN_ZERO, NAN_RANDOM):
            raise ValueError(f"unknown NaN strategy {self.nan_strategy!r}")
        if self.schema.d_t == 0:
            raise ValueError("prior encoding needs at least one categorical variable")

    @property
    def p(self) -> int:
        if self.strategy == LUMPED:
            return self.schema.n_combinations
        if self.strategy == RANDOM and self.n_columns:
            return int(self.n_columns)
        return self.schema.total_levels

    @functools.cached_property
    def matrix(self) -> np.ndarray:
        """The ``b_t x p`` prior matrix over all full combinations."""
        s = self.schema
        if self.strategy == LUMPED:
            return np.eye(s.n_combinations)
        if self.strategy == RANDOM:
            return np.random.default_rng(self.seed).uniform(0.0, 1.0, size=(s.n_combinations, self.p))
        Z = np.zeros((s.n_combinations, self.p))
        for r, combo in enumerate(s.combinations()):
            Z[r] = _onehot(s, combo)
        return Z

    def row(self, combo) -> np.ndarray:
        codes = _combo_codes(combo)
        hit = self._cache.get(codes)
        if hit is not None:
            return hit
        self.schema.validate_combo([np.nan if c == 0 else c for c in codes])
        if 0 not in codes:
            out = self.matrix[self.schema.combo_index(codes)]
        elif self.strategy == LUMPED:
            raise ValueError("lumped prior does not support variable-length combinations")
        elif self.strategy == RANDOM:
            out = _keyed_rng(self.seed, "random-prior", codes).uniform(0.0, 1.0, self.p)
        else:
            out = encode_variable_length(self.schema, codes, self.nan_strategy, self.nan_seed)
        out = np.array(out, dtype=float)
        out.setflags(write=False)
        self._cache[codes] = out
        return out

    def rows(self, T: np.ndarray) -> np.ndarray:
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return np.array([self.row(t) for t in T]).reshape(len(T), self.p)

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "seed": self.seed, "n_columns": self.n_columns,
                "nan_strategy": self.nan_strategy, "nan_seed": self.nan_seed}


def _onehot(schema: CategoricalSchema, combo) -> np.ndarray:
    row = np.zeros(schema.total_levels)
    for off, level in zip(schema.offsets, combo):
        row[off + int(level) - 1] = 1.0
    return row


def encode_prior(schema: CategoricalSchema, strategy: str = ONEHOT, seed: int = 0,
                 n_columns: int | None = None) -> PriorEncoding:
    return PriorEncoding(schema, strategy, seed, n_columns)


def encode_variable_length(schema: CategoricalSchema, combo, nan_strategy: str = NAN_ZERO,
                           seed: int = 0) -> np.ndarray:
    """Grouped one-hot row for a combination that may contain NaN levels.

    The block of each NaN variable is all zeros (``zero``) or IID
    Uniform(0, 1) values drawn from a stream keyed on ``(seed, combo)``
    (``random``).
    """
    combo = [np.nan if _isnan(v) or v == 0 else v for v in combo]
    schema.validate_combo(combo)
    codes = _combo_codes(combo)
    row = np.zeros(schema.total_levels)
    rng = _keyed_rng(seed, "nan-fill", codes) if nan_strategy == NAN_RANDOM else None
    for var, off, level in zip(schema.variables, schema.offsets, codes):
        if level == 0:
            if nan_strategy == NAN_RANDOM:
                row[off:off + var.m] = rng.uniform(0.0, 1.0, var.m)
            elif nan_strategy != NAN_ZERO:
                raise ValueError(f"unknown NaN strategy {nan_strategy!r}")
        else:
            row[off + level - 1] = 1.0
    return row


def map_to_latent(zeta_row, A) -> np.ndarray:
    zeta_row = np.asarray(zeta_row, dtype=float)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or zeta_row.shape[-1] != A.shape[0]:
        raise ValueError(f"prior width {zeta_row.shape[-1]} does not match map with shape {A.shape}")
    return zeta_row @ A


def canonicalize_latent(Z, tol: float = 1e-12) -> np.ndarray:
    """Pin a 2D latent configuration by a rigid transform.

    Row 0 goes to the origin, the first row not coincident with it is rotated
    onto the positive z1 axis and the configuration is reflected if needed so
    that the next off-axis row has z2 >= 0.
    """
    Z = np.array(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != 2:
        raise ValueError("canonicalization is defined for 2D latent spaces only")
    Z = Z - Z[0]
    scale = np.abs(Z).max() if Z.size else 0.0
    if scale == 0.0:
        return np.zeros_like(Z)
    radii = np.hypot(Z[:, 0], Z[:, 1])
    k = int(np.argmax(radii > tol * scale))
    c, s = Z[k] / radii[k]
    if s != 0.0 or c != 1.0:
        Z = Z @ np.array([[c, -s], [s, c]])
        Z[k, 1] = 0.0
    off_axis = np.flatnonzero(np.abs(Z[:, 1]) > tol * scale)
    if off_axis.size and Z[off_axis[0], 1] < 0:
        Z[:, 1] = -Z[:, 1]
    return Z


def lvgp_correlation(w, w2, omega, lvgp_points) -> float:
    """Gaussian correlation with a separate latent plane per categorical variable."""
    x, x2 = np.asarray(w.x, dtype=float), np.asarray(w2.x, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if x.shape != x2.shape or x.shape != omega.shape:
        raise ValueError("numeric parts and omega must have equal length")
    if len(w.t) != len(lvgp_points) or len(w2.t) != len(lvgp_points):
        raise ValueError("one latent point set per categorical variable is required")
    expo = float(np.sum(10.0 ** omega * (x - x2) ** 2))
    for P, a, b in zip(lvgp_points, w.t, w2.t):
        P = np.asarray(P, dtype=float)
        for lv in (a, b):
            if _isnan(lv) or lv != int(lv) or not 1 <= int(lv) <= len(P):
                raise ValueError(f"invalid level {lv} for a variable with {len(P)} levels")
        expo += float(np.sum((P[int(a) - 1] - P[int(b) - 1]) ** 2))
    return float(np.exp(-expo))


def lvgp_structure(schema: CategoricalSchema, d_z: int = 2):
    """Free-entry mask and bounds of the block-diagonal LVGP map.

    Returns ``(mask, lower, upper)`` arrays of shape ``(sum m_i, d_t * d_z)``.
    Within each variable's block, level ``l`` (1-based) may only use its first
    ``l - 1`` coordinates and coordinate ``l - 1`` is kept nonnegative, for
    ``l <= d_z + 1``; later levels are unconstrained.
    """
    p, q = schema.total_levels, schema.d_t * d_z
    mask = np.zeros((p, q), dtype=bool)
    lower = np.zeros((p, q))
    upper = np.zeros((p, q))
    for i, (var, off) in enumerate(zip(schema.variables, schema.offsets)):
        cols = slice(i * d_z, (i + 1) * d_z)
        for lv in range(var.m):
            r = off + lv
            nfree = min(lv, d_z)
            m = np.zeros(d_z, dtype=bool)
            m[:nfree] = True
            lo = np.where(m, -LVGP_BOUND, 0.0)
            if 1 <= lv <= d_z:
                lo[lv - 1] = 0.0
            mask[r, cols] = m
            lower[r, cols] = lo
            upper[r, cols] = np.where(m, LVGP_BOUND, 0.0)
    return mask, lower, upper


@dataclass(frozen=True)
class LatentMap:
    """A prior encoding together with its mapping matrix.

    For ``lvgp`` the matrix is ``(sum m_i, d_t * d_z)`` and block diagonal.
    """

    kind: str
    encoding: PriorEncoding
    A: np.ndarray
    d_z: int = 2

    def __post_init__(self):
        if self.kind not in (LMGP, LVGP):
            raise ValueError(f"unknown latent map kind {self.kind!r}")
        A = np.array(self.A, dtype=float)
        want = (self.encoding.p, self.q)
        if A.shape != want:
            raise ValueError(f"map has shape {A.shape}, expected {want}")
        if self.kind == LVGP and self.encoding.strategy != ONEHOT:
            raise ValueError("LVGP requires the grouped one-hot prior")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def q(self) -> int:
        return self.d_z * (self.encoding.schema.d_t if self.kind == LVGP else 1)

    def positions(self, T) -> np.ndarray:
        return self.encoding.rows(T) @ self.A

    def lvgp_points(self) -> list[np.ndarray]:
        if self.kind != LVGP:
            raise ValueError("not an LVGP map")
        s = self.encoding.schema
        return [self.A[off:off + v.m, i * self.d_z:(i + 1) * self.d_z].copy()
                for i, (v, off) in enumerate(zip(s.variables, s.offsets))]

    def with_A(self, A) -> "LatentMap":
        return LatentMap(self.kind, self.encoding, A, self.d_z)


def lvgp_map_from_points(schema: CategoricalSchema, points, d_z: int = 2) -> LatentMap:
    enc = PriorEncoding(schema, ONEHOT)
    A = np.zeros((schema.total_levels, schema.d_t * d_z))
    for i, (P, off) in enumerate(zip(points, schema.offsets)):
        P = np.asarray(P, dtype=float)
        A[off:off + len(P), i * d_z:(i + 1) * d_z] = P
    return LatentMap(LVGP, enc, A, d_z)


def latent_positions(model) -> list[tuple[str, float, float]]:
    """Canonicalized 2D latent coordinates of every level combination.

    For an LMGP this is one row per full combination of the schema.  LVGP has
    one plane per variable, so its rows are per level, labelled ``name=level``.
    """
    lm = getattr(model.hypers, "latent", None)
    if lm is None:
        raise NotImplementedError("latent positions are undefined for a model without categorical inputs")
    if lm.d_z != 2:
        raise NotImplementedError("latent positions are exported for 2D latent spaces only")
    schema = lm.encoding.schema
    if lm.kind == LMGP:
        combos = list(schema.combinations())
        Z = canonicalize_latent(lm.encoding.matrix @ lm.A)
        return [(schema.label(c), float(z[0]), float(z[1])) for c, z in zip(combos, Z)]
    out = []
    for var, P in zip(schema.variables, lm.lvgp_points()):
        Z = canonicalize_latent(P) if len(P) >= 2 else P
        out += [(f"{var.name}={lab}", float(z[0]), float(z[1])) for lab, z in zip(var.levels, Z)]
    return out


def write_latent_csv(rows, path, comment: str | None = None) -> None:
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("combo,z1,z2\n")
        for label, z1, z2 in rows:
            fh.write(f"{label},{z1!r},{z2!r}\n")


def dataset_positions(lm: LatentMap, data: MixedDataset) -> np.ndarray:
    return lm.positions(data.T)
