import math

import numpy as np
import pytest
from conftest import borehole_data, lmgp_hypers, random_dataset, small_schema

from lmgp.data import MixedDataset, MixedSample
from lmgp.gp import (
    NUMERICAL_FLOOR,
    DegenerateFitWarning,
    Hyperparameters,
    build_correlation_matrix,
    gaussian_correlation,
    mixed_correlation,
    neg_log_profile_likelihood,
    predict,
    predict_cov,
    profile_beta,
    profile_sigma2,
)
from lmgp.optimize import model_from_hypers


def test_gaussian_correlation_examples():
    x = np.array([0.3, -1.0, 2.0])
    assert gaussian_correlation(x, x, [1.0, -2.0, 0.5]) == 1.0
    assert gaussian_correlation([1, 0, 0], [0, 0, 0], [0, 0, 0]) == pytest.approx(math.exp(-1), abs=1e-15)


def test_gaussian_correlation_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b, w = rng.normal(size=3), rng.normal(size=3), rng.uniform(-2, 1, 3)
        s = 0.0
        for i in range(3):
            s += 10 ** w[i] * (a[i] - b[i]) ** 2
        assert abs(gaussian_correlation(a, b, w) - math.exp(-s)) < 1e-14


def test_gaussian_correlation_dimension_mismatch():
    with pytest.raises(ValueError):
        gaussian_correlation([1, 2], [1, 2, 3], [0, 0])


def test_mixed_correlation_examples(schema):
    h = lmgp_hypers(schema)
    w = MixedSample((0.2, 0.4), (1, 3))
    assert mixed_correlation(w, w, h) == 1.0
    # unit latent distance through a hand-made map
    A = np.zeros((5, 2))
    A[0] = [1.0, 0.0]
    hz = Hyperparameters(h.omega, h.latent.with_A(A), 0.0)
    r = mixed_correlation(MixedSample((0.2, 0.4), (1, 1)), MixedSample((0.2, 0.4), (2, 1)), hz)
    assert r == pytest.approx(math.exp(-1), abs=1e-15)


def test_mixed_correlation_equals_concatenated_gaussian(schema):
    h = lmgp_hypers(schema, seed=4)
    rng = np.random.default_rng(0)
    for _ in range(10):
        w = MixedSample(tuple(rng.random(2)), (int(rng.integers(1, 3)), int(rng.integers(1, 4))))
        v = MixedSample(tuple(rng.random(2)), (int(rng.integers(1, 3)), int(rng.integers(1, 4))))
        za, zb = h.latent.positions(np.array([w.t, v.t]))
        want = gaussian_correlation(np.r_[w.x, za], np.r_[v.x, zb], np.r_[h.omega, 0.0, 0.0])
        assert mixed_correlation(w, v, h) == pytest.approx(want, rel=1e-13)


def test_pure_numeric_mixed_equals_gaussian():
    s = small_schema(levels=())
    h = Hyperparameters([0.3, -0.5])
    a, b = MixedSample((0.1, 0.9)), MixedSample((0.5, 0.2))
    assert mixed_correlation(a, b, h) == gaussian_correlation(a.x, b.x, h.omega)
    assert s.d_t == 0


def test_correlation_matrix_small_cases(schema):
    h = lmgp_hypers(schema, delta=0.1)
    one = MixedDataset(schema, [[0.5, 0.5]], [[1, 1]], [1.0])
    assert np.array_equal(build_correlation_matrix(one, h), [[1.1]])
    two = MixedDataset(schema, [[0.5, 0.5]] * 2, [[1, 1]] * 2, [1.0, 2.0])
    assert np.allclose(build_correlation_matrix(two, h), [[1.1, 1.0], [1.0, 1.1]], atol=0, rtol=1e-15)


def test_correlation_matrix_pairwise_oracle(schema):
    h = lmgp_hypers(schema, seed=2, delta=0.01)
    d = random_dataset(schema, 5, seed=1)
    R = build_correlation_matrix(d, h)
    for i in range(5):
        for j in range(5):
            want = mixed_correlation(d.sample(i), d.sample(j), h) + (h.delta if i == j else 0.0)
            assert abs(R[i, j] - want) < 1e-14
    assert np.array_equal(R, R.T)
    assert np.all(np.diag(R) == 1 + h.delta)


def test_profile_beta_examples():
    y = np.array([1.0, 4.0, -2.0, 0.5])
    assert profile_beta(np.eye(4), np.ones((4, 1)), y) == pytest.approx([y.mean()], rel=1e-14)
    assert np.allclose(profile_beta(np.eye(4), np.eye(4), y), y, atol=1e-14)


def test_profile_beta_dense_oracle():
    R = np.array([[1.2, 0.5, 0.1], [0.5, 1.1, 0.3], [0.1, 0.3, 1.3]])
    F = np.array([[1.0, 0.2], [1.0, 0.7], [1.0, -0.4]])
    y = np.array([0.3, -1.2, 2.0])
    Ri = np.linalg.inv(R)
    want = np.linalg.inv(F.T @ Ri @ F) @ F.T @ Ri @ y
    assert np.allclose(profile_beta(R, F, y), want, rtol=1e-12, atol=1e-12)


def test_profile_sigma2_examples():
    y = np.array([1.0, 3.0])
    F = np.ones((2, 1))
    with pytest.warns(DegenerateFitWarning):
        assert profile_sigma2(np.eye(2), F, np.array([2.0, 2.0]), [2.0]) == 1e-300
    assert profile_sigma2(np.eye(2), F, y, [2.0]) == pytest.approx(1.0)
    rng = np.random.default_rng(5)
    B = rng.normal(size=(6, 6))
    R = B @ B.T + 6 * np.eye(6)
    F = np.ones((6, 1))
    y = rng.normal(size=6)
    beta = profile_beta(R, F, y)
    r = y - F @ beta
    assert profile_sigma2(R, F, y, beta) == pytest.approx(r @ np.linalg.inv(R) @ r / 6, rel=1e-12)


def test_likelihood_identity_case():
    s = small_schema(d_x=1, levels=())
    d = MixedDataset(s, [[0.0], [1.0]], np.zeros((2, 0)), [0.0, 2.0])
    h = Hyperparameters([3.0], None, 0.0)  # exp(-1000) = 0, R = I up to the floor
    assert neg_log_profile_likelihood(h, d) == pytest.approx(0.0, abs=1e-10)


def test_likelihood_matches_full_gaussian_oracle(schema):
    d = random_dataset(schema, 8, seed=3)
    h = lmgp_hypers(schema, seed=5, delta=0.05)
    L = neg_log_profile_likelihood(h, d)
    R = build_correlation_matrix(d, h) + NUMERICAL_FLOOR * np.eye(8)
    F = np.ones((8, 1))
    Ri = np.linalg.inv(R)
    beta = np.linalg.solve(F.T @ Ri @ F, F.T @ Ri @ d.y)
    r = d.y - F @ beta
    s2 = r @ Ri @ r / 8
    # -2 log-likelihood of N(F beta, s2 R) minus the constant n log(2 pi) + n
    full = 8 * np.log(2 * np.pi) + 8 * np.log(s2) + np.linalg.slogdet(R)[1] + r @ Ri @ r / s2
    assert L == pytest.approx(full - 8 * np.log(2 * np.pi) - 8, rel=1e-10)


def test_likelihood_scaling_and_shift(schema):
    d = random_dataset(schema, 10, seed=2)
    h = lmgp_hypers(schema, seed=1, delta=0.01)
    L = neg_log_profile_likelihood(h, d)
    assert neg_log_profile_likelihood(h, d.with_y(3.0 * d.y)) == pytest.approx(L + 10 * math.log(9.0), abs=1e-9)
    assert neg_log_profile_likelihood(h, d.with_y(d.y + 17.0)) == pytest.approx(L, abs=1e-9)


def test_likelihood_infinite_when_not_pd(schema):
    d = MixedDataset(schema, [[0.5, 0.5]] * 3, [[1, 1]] * 3, [1.0, 2.0, 3.0])
    h = lmgp_hypers(schema, delta=0.0)
    h = Hyperparameters(h.omega, h.latent, 0.0)
    L = neg_log_profile_likelihood(h, d)
    assert L == math.inf or L > 0  # rank-1 matrix plus the floor


def test_rotation_invariance(schema):
    d = random_dataset(schema, 12, seed=8)
    h = lmgp_hypers(schema, seed=9, delta=1e-3)
    L = neg_log_profile_likelihood(h, d)
    rng = np.random.default_rng(0)
    for _ in range(10):
        Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        hq = Hyperparameters(h.omega, h.latent.with_A(h.latent.A @ Q), h.delta)
        assert abs(neg_log_profile_likelihood(hq, d) - L) < 1e-10


# -- prediction ------------------------------------------------------------------


def _dense_oracle(model, Xq, Tq):
    """Explicit-inverse universal kriging on the model's standardized scale."""
    s = model.train.schema
    sc = lambda X: (np.asarray(X) - s.lower) / (s.upper - s.lower)  # noqa: E731
    h = model.hypers
    Z = h.latent.positions(model.train.T)
    Zq = h.latent.positions(Tq)

    def corr(Xa, Za, Xb, Zb):
        out = np.empty((len(Xa), len(Xb)))
        for i in range(len(Xa)):
            for j in range(len(Xb)):
                e = np.sum(10 ** h.omega * (Xa[i] - Xb[j]) ** 2) + np.sum((Za[i] - Zb[j]) ** 2)
                out[i, j] = np.exp(-e)
        return out

    Xt = sc(model.train.X)
    ys = (model.train.y - model.y_mean) / model.y_std
    n = len(ys)
    V = model.sigma2 * (corr(Xt, Z, Xt, Z) + (h.delta + NUMERICAL_FLOOR) * np.eye(n))
    Vi = np.linalg.inv(V)
    F = np.ones((n, 1))
    beta = np.linalg.inv(F.T @ Vi @ F) @ F.T @ Vi @ ys
    g = model.sigma2 * corr(sc(Xq), Zq, Xt, Z)
    f = np.ones((len(Xq), 1))
    mean = f @ beta + g @ Vi @ (ys - F @ beta)
    hh = f - g @ Vi @ F
    C = model.sigma2 * corr(sc(Xq), Zq, sc(Xq), Zq) - g @ Vi @ g.T + hh @ np.linalg.inv(F.T @ Vi @ F) @ hh.T
    return model.y_mean + model.y_std * mean, model.y_std ** 2 * C


@pytest.fixture
def small_model(schema):
    d = random_dataset(schema, 10, seed=11)
    return model_from_hypers(d, "lmgp", lmgp_hypers(schema, seed=12, delta=1e-3))


def test_predict_matches_dense_oracle(small_model, schema):
    q = random_dataset(schema, 5, seed=99)
    mu, var = small_model.predict(q.X, q.T)
    om, oc = _dense_oracle(small_model, q.X, q.T)
    assert np.allclose(mu, om, rtol=1e-8, atol=1e-10)
    assert np.allclose(var, np.diag(oc), rtol=1e-8, atol=1e-12)
    c = predict_cov(small_model, q.sample(0), q.sample(3))
    assert c == pytest.approx(oc[0, 3], rel=1e-8, abs=1e-12)


def test_predict_cov_symmetric(small_model, schema):
    q = random_dataset(schema, 2, seed=5)
    a, b = q.sample(0), q.sample(1)
    assert abs(predict_cov(small_model, a, b) - predict_cov(small_model, b, a)) < 1e-12


def test_near_interpolation(schema):
    d = random_dataset(schema, 12, seed=21)
    m = model_from_hypers(d, "lmgp", lmgp_hypers(schema, seed=3, delta=1e-10))
    mu, var = m.predict(d.X, d.T)
    assert np.max(np.abs(mu - d.y)) <= 1e-5 * np.ptp(d.y)
    assert np.all(var <= 1e-4 * m.process_variance)
    assert abs(predict_cov(m, d.sample(0), d.sample(0))) <= 1e-4 * m.process_variance


def test_far_point_reverts_to_mean(small_model):
    p = predict(small_model, MixedSample((1e4, -1e4), (1, 1)))
    assert p.mean == pytest.approx(small_model.y_mean + small_model.y_std * small_model.beta[0], rel=1e-10)
    assert p.variance >= 0


def test_variance_nonnegative_and_noise_identity():
    d = borehole_data(30, seed=4)
    s = d.schema
    h = lmgp_hypers(s, seed=1, delta=1e-6)
    h = Hyperparameters(np.full(s.d_x, 2.0), h.latent, h.delta)
    m = model_from_hypers(d, "lmgp", h)
    q = borehole_data(200, seed=9)
    _, var = m.predict(q.X, q.T)
    assert np.all(var >= 0)
    assert m.noise_variance == m.hypers.delta * m.process_variance
    L = m.chol
    R = build_correlation_matrix(
        MixedDataset(s, (d.X - s.lower) / (s.upper - s.lower), d.T, d.y), h)
    assert np.allclose(L @ L.T, R + NUMERICAL_FLOOR * np.eye(30), rtol=1e-8)
