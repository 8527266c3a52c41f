"""Quasi-random designs, noise injection and error metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from ..data import MixedDataset, Schema

MAX_SOBOL_DIM = 21201


@dataclass(frozen=True)
class SobolSampler:
    """Sobol' points in [0, 1)^d.

    Without ``seed`` the plain (unscrambled) sequence is used and its first
    ``skip`` points are dropped; with a seed the sequence is Owen-scrambled,
    which gives independent replicate designs with the same structure.
    """

    d: int
    skip: int = 1
    seed: int | None = None

    def points(self, n: int) -> np.ndarray:
        if not 1 <= self.d <= MAX_SOBOL_DIM:
            raise ValueError(f"Sobol dimension must be in 1..{MAX_SOBOL_DIM}, got {self.d}")
        if n < 0 or self.skip < 0:
            raise ValueError("n and skip must be nonnegative")
        eng = qmc.Sobol(self.d, scramble=self.seed is not None, seed=self.seed)
        if self.skip:
            eng.fast_forward(self.skip)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # balance warning for n not a power of 2
            return eng.random(n)


def sobol_points(d: int, n: int, skip: int = 1, seed: int | None = None) -> np.ndarray:
    return SobolSampler(d, skip, seed).points(n)


def unit_to_levels(U, m) -> np.ndarray:
    """Map unit coordinates to 1-based levels, ``floor(u * m) + 1`` clamped to ``m``."""
    m = np.asarray(m)
    return np.minimum(np.floor(np.asarray(U) * m) + 1, m).astype(float)


def sample_mixed_design(fn_or_schema, n: int, skip: int = 1, seed: int | None = None) -> MixedDataset:
    """Inputs of a mixed design; numeric coordinates fill the schema ranges affinely."""
    schema: Schema = getattr(fn_or_schema, "schema", fn_or_schema)
    d = schema.d_x + schema.d_t
    U = sobol_points(d, n, skip, seed)
    X = schema.lower + U[:, : schema.d_x] * (schema.upper - schema.lower)
    T = unit_to_levels(U[:, schema.d_x:], schema.categorical.m) if schema.d_t else np.zeros((n, 0))
    return MixedDataset(schema, X, T)


@dataclass(frozen=True)
class NoiseSpec:
    variance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be nonnegative")


def add_noise(y, noise: NoiseSpec) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if noise.variance == 0:
        return y.copy()
    rng = np.random.default_rng(noise.seed)
    return y + rng.normal(0.0, np.sqrt(noise.variance), size=y.shape)


def mse(pred, truth) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))
