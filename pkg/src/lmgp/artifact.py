"""Save and load fitted models as self-describing JSON."""

from __future__ import annotations

import json
import math

import numpy as np

from .data import MixedDataset, Schema
from .gp import FittedModel, Hyperparameters
from .latent import LatentMap, PriorEncoding
from .optimize import model_from_hypers

FORMAT = "lmgp-model"
FORMAT_VERSION = 1


class ArtifactError(ValueError):
    """A model file that cannot be used with this version or schema."""


def _nan_list(a) -> list:
    return [[None if math.isnan(v) else v for v in row] for row in np.asarray(a, float).tolist()]


def _from_nan_list(rows, width: int) -> np.ndarray:
    return np.array([[math.nan if v is None else v for v in row] for row in rows], dtype=float).reshape(-1, width)


def model_to_dict(model: FittedModel) -> dict:
    h = model.hypers
    latent = None
    if h.latent is not None:
        latent = {"kind": h.latent.kind, "d_z": h.latent.d_z, "encoding": h.latent.encoding.to_dict(),
                  "A": np.asarray(h.latent.A).tolist()}
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "basis": model.basis,
        "schema": model.train.schema.to_dict(),
        "standardization": {"y_mean": model.y_mean, "y_std": model.y_std},
        "hyperparameters": {"omega": np.asarray(h.omega).tolist(), "delta": h.delta, "latent": latent},
        "beta": np.asarray(model.beta).tolist(),
        "sigma2": model.sigma2,
        "objective": model.objective,
        "train": {"X": np.asarray(model.train.X).tolist(), "T": _nan_list(model.train.T),
                  "y": np.asarray(model.train.y).tolist()},
    }


def model_from_dict(d: dict, schema: Schema | None = None) -> FittedModel:
    """Rebuild a model; ``schema``, if given, must match the stored one."""
    if d.get("format") != FORMAT:
        raise ArtifactError("not a model artifact")
    if d.get("version") != FORMAT_VERSION:
        raise ArtifactError(f"artifact version {d.get('version')} is not supported (expected {FORMAT_VERSION})")
    stored = Schema.from_dict(d["schema"])
    if schema is not None and schema.to_dict() != stored.to_dict():
        raise ArtifactError(f"artifact version {FORMAT_VERSION}: schema does not match the supplied data")
    tr = d["train"]
    data = MixedDataset(stored, np.array(tr["X"], float).reshape(-1, stored.d_x),
                        _from_nan_list(tr["T"], stored.d_t), np.array(tr["y"], float))
    hp = d["hyperparameters"]
    latent = None
    if hp["latent"] is not None:
        lt = hp["latent"]
        enc = PriorEncoding(stored.categorical, **lt["encoding"])
        latent = LatentMap(lt["kind"], enc, np.array(lt["A"], float), lt["d_z"])
    hypers = Hyperparameters(np.array(hp["omega"], float), latent, float(hp["delta"]))
    model = model_from_hypers(data, d["kind"], hypers, d["basis"], float(d["objective"]))
    st = d["standardization"]
    if not (np.allclose(model.beta, d["beta"], rtol=1e-8, atol=1e-12)
            and math.isclose(model.sigma2, d["sigma2"], rel_tol=1e-8)
            and math.isclose(model.y_mean, st["y_mean"], rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(model.y_std, st["y_std"], rel_tol=1e-12)):
        raise ArtifactError(f"artifact version {FORMAT_VERSION}: stored estimates disagree with the training data")
    return model


def save_model(model: FittedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path, schema: Schema | None = None) -> FittedModel:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(d, schema)
