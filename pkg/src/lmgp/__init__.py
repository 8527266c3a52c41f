"""Gaussian-process metamodels for mixed numeric and categorical inputs."""

from .data import (
    CategoricalSchema,
    CategoricalVariable,
    MixedDataset,
    MixedSample,
    NumericVariable,
    Schema,
    read_dataset_csv,
    write_dataset_csv,
)
from .gp import FitError, FittedModel, Hyperparameters, PredictivePoint, neg_log_profile_likelihood, predict
from .latent import LatentMap, PriorEncoding, canonicalize_latent, encode_prior, latent_positions
from .optimize import FitConfig, fit, fit_with_continuation

__version__ = "0.1.0"

__all__ = [
    "CategoricalSchema", "CategoricalVariable", "FitConfig", "FitError", "FittedModel", "Hyperparameters",
    "LatentMap", "MixedDataset", "MixedSample", "NumericVariable", "PredictivePoint", "PriorEncoding",
    "Schema", "canonicalize_latent", "encode_prior", "fit", "fit_with_continuation", "latent_positions",
    "neg_log_profile_likelihood", "predict", "read_dataset_csv", "write_dataset_csv",
]
