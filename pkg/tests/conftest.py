import numpy as np
import pytest

from lmgp.data import CategoricalSchema, CategoricalVariable, MixedDataset, NumericVariable, Schema
from lmgp.gp import Hyperparameters
from lmgp.latent import LMGP, LatentMap, encode_prior
from lmgp.testbed import get_function, sample_mixed_design


def small_schema(d_x=2, levels=(2, 3), nan_allowed=()):
    num = tuple(NumericVariable(f"x{i + 1}", 0.0, 1.0) for i in range(d_x))
    cats = tuple(CategoricalVariable(f"t{j + 1}", tuple(str(k + 1) for k in range(m)), j in nan_allowed)
                 for j, m in enumerate(levels))
    return Schema(num, CategoricalSchema(cats))


def random_dataset(schema, n, seed=0):
    rng = np.random.default_rng(seed)
    X = schema.lower + rng.random((n, schema.d_x)) * (schema.upper - schema.lower)
    T = np.column_stack([rng.integers(1, m + 1, n) for m in schema.categorical.m]) if schema.d_t else None
    y = np.sin(3 * X.sum(axis=1)) + (T.sum(axis=1) * 0.3 if T is not None else 0)
    return MixedDataset(schema, X, np.zeros((n, 0)) if T is None else T, y)


def lmgp_hypers(schema, seed=0, delta=1e-3, scale=0.5):
    rng = np.random.default_rng(seed)
    enc = encode_prior(schema.categorical)
    A = rng.uniform(-scale, scale, (enc.p, 2))
    return Hyperparameters(rng.uniform(-1, 1, schema.d_x), LatentMap(LMGP, enc, A), delta)


def borehole_data(n, seed=0):
    fn = get_function(3)
    d = sample_mixed_design(fn, n, seed=seed)
    return d.with_y(fn.evaluate(d.X, d.T))


@pytest.fixture
def schema():
    return small_schema()


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
