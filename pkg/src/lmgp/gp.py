"""Gaussian-process core: correlations, profile likelihood and prediction.

The correlation between two mixed inputs is

    r(w, w') = exp(-||z(t) - z(t')||^2 - sum_i 10**omega_i (x_i - x'_i)^2)

with ``z`` supplied by a :class:`~lmgp.latent.LatentMap`.  ``beta`` and
``sigma2`` are profiled out in closed form so only ``omega``, the map and the
nugget ``delta`` are left to the optimizer.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular
from scipy.spatial.distance import cdist

from .data import MixedDataset, MixedSample, Schema
from .latent import LatentMap

NUMERICAL_FLOOR = 1e-12
SIGMA2_FLOOR = 1e-300
LN10 = math.log(10.0)


class FitError(RuntimeError):
    """Raised when a model cannot be fitted (singular GLS system, all starts failed, ...)."""


class DegenerateFitWarning(RuntimeWarning):
    """The profiled process variance underflowed and was clamped."""


@dataclass(frozen=True)
class Hyperparameters:
    omega: np.ndarray
    latent: LatentMap | None = None
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", np.array(self.omega, dtype=float).reshape(-1))
        if self.delta < 0:
            raise ValueError("nugget must be nonnegative")


@dataclass(frozen=True)
class PredictivePoint:
    mean: float
    variance: float


def gaussian_correlation(x, x2, omega) -> float:
    x, x2, omega = (np.asarray(a, dtype=float).reshape(-1) for a in (x, x2, omega))
    if not x.shape == x2.shape == omega.shape:
        raise ValueError(f"dimension mismatch: {x.shape}, {x2.shape}, {omega.shape}")
    return float(np.exp(-np.sum(10.0 ** omega * (x - x2) ** 2)))


def mixed_correlation(w: MixedSample, w2: MixedSample, hypers: Hyperparameters) -> float:
    expo = -math.log(gaussian_correlation(w.x, w2.x, hypers.omega)) if len(w.x) else 0.0
    if hypers.latent is not None:
        za, zb = hypers.latent.positions(np.array([w.t, w2.t]))
        expo += float(np.sum((za - zb) ** 2))
    elif len(w.t) or len(w2.t):
        raise ValueError("categorical inputs need a latent map")
    return float(np.exp(-expo))


def _sq_diffs(X: np.ndarray) -> np.ndarray:
    """Stack of per-dimension squared differences, shape (d, n, n)."""
    return np.stack([np.subtract.outer(c, c) ** 2 for c in X.T]) if X.shape[1] else np.zeros((0, len(X), len(X)))


def correlation_matrix(X, omega, Z=None, X2=None, Z2=None) -> np.ndarray:
    """Kernel matrix between two point sets (no nugget)."""
    X = np.asarray(X, dtype=float)
    X2 = X if X2 is None else np.asarray(X2, dtype=float)
    s = np.sqrt(10.0 ** np.asarray(omega, dtype=float))
    U, U2 = X * s, X2 * s
    if Z is not None:
        U = np.hstack([U, Z])
        U2 = np.hstack([U2, Z if Z2 is None else Z2])
    if U.shape[1] == 0:
        return np.ones((len(U), len(U2)))
    return np.exp(-cdist(U, U2, "sqeuclidean"))


def build_correlation_matrix(data: MixedDataset, hypers: Hyperparameters) -> np.ndarray:
    """``R_delta = R + delta * I`` over the dataset's inputs, in the data's own units."""
    Z = hypers.latent.positions(data.T) if hypers.latent is not None else None
    if Z is None and data.schema.d_t:
        raise ValueError("categorical inputs need a latent map")
    if len(hypers.omega) != data.schema.d_x:
        raise ValueError(f"omega has {len(hypers.omega)} entries, data has {data.schema.d_x} numeric inputs")
    R = correlation_matrix(data.X, hypers.omega, Z)
    R[np.diag_indices_from(R)] = 1.0 + hypers.delta
    return R


def basis_matrix(basis: str, Xs: np.ndarray) -> np.ndarray:
    if basis == "constant":
        return np.ones((len(Xs), 1))
    if basis == "linear":
        return np.hstack([np.ones((len(Xs), 1)), Xs])
    raise ValueError(f"unknown mean basis {basis!r}")


def _chol(R: np.ndarray) -> np.ndarray | None:
    c, info = lapack.dpotrf(R, lower=1, clean=1)
    return None if info != 0 else c


def _gls_beta(Lf: np.ndarray, F: np.ndarray, y: np.ndarray):
    Ft = solve_triangular(Lf, F, lower=True, check_finite=False)
    yt = solve_triangular(Lf, y, lower=True, check_finite=False)
    G = Ft.T @ Ft
    try:
        cg = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise FitError("F^T R^-1 F is singular; the mean basis is not identifiable from these inputs") from None
    beta = np.linalg.solve(cg.T, np.linalg.solve(cg, Ft.T @ yt))
    return beta, Ft, yt


def profile_beta(R_delta, F, y) -> np.ndarray:
    """Generalized least-squares mean coefficients via the Cholesky factor of ``R_delta``."""
    R_delta, F, y = np.asarray(R_delta, float), np.atleast_2d(np.asarray(F, float)), np.asarray(y, float)
    if F.shape[0] != len(y):
        F = F.T
    Lf = _chol(R_delta)
    if Lf is None:
        raise FitError("correlation matrix is not positive definite")
    return _gls_beta(Lf, F, y)[0]


def profile_sigma2(R_delta, F, y, beta) -> float:
    R_delta, y = np.asarray(R_delta, float), np.asarray(y, float)
    F = np.atleast_2d(np.asarray(F, float))
    if F.shape[0] != len(y):
        F = F.T
    Lf = _chol(R_delta)
    if Lf is None:
        raise FitError("correlation matrix is not positive definite")
    res = solve_triangular(Lf, y - F @ np.asarray(beta, float), lower=True)
    s2 = float(res @ res) / len(y)
    if not s2 > 0:
        warnings.warn("profiled process variance is not positive; clamped", DegenerateFitWarning, stacklevel=2)
        return SIGMA2_FLOOR
    return s2


class ProfileLikelihood:
    """Reduced objective ``L = n log(sigma2_hat) + log|R_delta|`` on fixed inputs.

    ``X`` are the numeric inputs (already in the units ``omega`` refers to),
    ``Zeta`` the prior rows of the categorical inputs.  Gradients are returned
    with respect to ``omega``, the full map matrix ``A`` and ``log10(delta)``.
    """

    def __init__(self, X, y, Zeta=None, F=None, floor: float = NUMERICAL_FLOOR):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.n = len(self.y)
        self.Zeta = None if Zeta is None else np.asarray(Zeta, dtype=float)
        self.F = np.ones((self.n, 1)) if F is None else np.asarray(F, dtype=float)
        self.floor = floor
        self.D = _sq_diffs(self.X)
        self._Dflat = self.D.reshape(len(self.D), -1)

    def kernel(self, omega, A=None) -> np.ndarray:
        if len(self.D):
            E = (10.0 ** np.asarray(omega, float) @ self._Dflat).reshape(self.n, self.n)
        else:
            E = np.zeros((self.n, self.n))
        if self.Zeta is not None:
            Z = self.Zeta @ A
            E += cdist(Z, Z, "sqeuclidean")
        np.negative(E, out=E)
        return np.exp(E, out=E)

    def evaluate(self, omega, A=None, delta=0.0, gradient=False):
        """Return ``L`` or ``(L, (g_omega, g_A, g_log10delta))``.

        ``L`` is ``inf`` when the factorization fails; the gradient is then
        ``None``.
        """
        omega = np.asarray(omega, dtype=float)
        K = self.kernel(omega, A)
        R = K.copy()
        R[np.diag_indices_from(R)] += delta + self.floor
        Lf = _chol(R)
        if Lf is None or not np.all(np.isfinite(Lf)):
            return (math.inf, None) if gradient else math.inf
        beta, Ft, yt = _gls_beta(Lf, self.F, self.y)
        res = yt - Ft @ beta
        sigma2 = max(float(res @ res) / self.n, SIGMA2_FLOOR)
        logdet = 2.0 * float(np.sum(np.log(np.diag(Lf))))
        value = self.n * math.log(sigma2) + logdet
        if not gradient:
            return value
        Rinv, info = lapack.dpotri(Lf, lower=1)
        if info != 0:
            return value, None
        # dpotri fills the lower triangle only; the upper one is still zero
        dg = np.diag(Rinv).copy()
        Rinv += Rinv.T
        Rinv[np.diag_indices_from(Rinv)] = dg
        alpha = solve_triangular(Lf, res, lower=True, trans="T", check_finite=False)
        W = Rinv
        W -= np.outer(alpha / sigma2, alpha)
        M = W * K
        if len(self.D):
            g_omega = -LN10 * 10.0 ** omega * (self._Dflat @ M.ravel())
        else:
            g_omega = np.zeros(0)
        g_A = None
        if self.Zeta is not None:
            Z = self.Zeta @ A
            # S_ak = sum_b M_ab (z_ak - z_bk), summed without cancellation
            S = np.column_stack([np.einsum("ab,ab->a", M, np.subtract.outer(zk, zk)) for zk in Z.T])
            g_A = -4.0 * self.Zeta.T @ S
        g_logdelta = LN10 * delta * float(np.trace(W))
        return value, (g_omega, g_A, g_logdelta)

    def estimates(self, omega, A=None, delta=0.0):
        """Cholesky factor, ``beta_hat``, ``sigma2_hat`` and ``R^-1 (y - F beta)`` at a point."""
        K = self.kernel(omega, A)
        K[np.diag_indices_from(K)] += delta + self.floor
        Lf = _chol(K)
        if Lf is None:
            raise FitError("correlation matrix is not positive definite at the fitted hyperparameters")
        beta, Ft, yt = _gls_beta(Lf, self.F, self.y)
        res = yt - Ft @ beta
        s2 = float(res @ res) / self.n
        if not s2 > 0:
            warnings.warn("profiled process variance is not positive; clamped", DegenerateFitWarning, stacklevel=2)
            s2 = SIGMA2_FLOOR
        alpha = solve_triangular(Lf, res, lower=True, trans="T", check_finite=False)
        return Lf, beta, s2, alpha


def neg_log_profile_likelihood(hypers: Hyperparameters, data: MixedDataset, basis: str = "constant") -> float:
    """Reduced negative log-likelihood; ``inf`` if ``R_delta`` cannot be factorized."""
    if data.y is None:
        raise ValueError("dataset has no responses")
    Zeta = hypers.latent.encoding.rows(data.T) if hypers.latent is not None else None
    if Zeta is None and data.schema.d_t:
        raise ValueError("categorical inputs need a latent map")
    prob = ProfileLikelihood(data.X, data.y, Zeta, basis_matrix(basis, data.X))
    return prob.evaluate(hypers.omega, None if hypers.latent is None else hypers.latent.A, hypers.delta)


# ---------------------------------------------------------------------------
# fitted models


def numeric_view(schema: Schema, X, T) -> np.ndarray:
    """Categorical level indices as extra numeric columns scaled to [0, 1] (plain GP)."""
    m = np.array(schema.categorical.m, dtype=float)
    Tn = (np.asarray(T, float) - 1.0) / (m - 1.0) if len(m) else np.zeros((len(X), 0))
    return np.hstack([np.asarray(X, float), Tn])


@dataclass(frozen=True)
class FittedModel:
    """An immutable fitted GP/LMGP/LVGP.

    ``hypers``, ``beta`` and ``sigma2`` live on the standardized scale the
    model was trained on (numeric inputs mapped to [0, 1] using the schema
    ranges, responses centred and scaled by ``y_mean``/``y_std``).
    """

    kind: str
    hypers: Hyperparameters
    beta: np.ndarray
    sigma2: float
    train: MixedDataset
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    basis: str = "constant"
    objective: float = math.nan
    info: dict = field(default_factory=dict, compare=False)

    @property
    def process_variance(self) -> float:
        return self.sigma2 * self.y_std ** 2

    @property
    def noise_variance(self) -> float:
        return self.hypers.delta * self.process_variance

    # inputs -> model features
    def scaled_x(self, X, T) -> np.ndarray:
        s = self.train.schema
        X = np.asarray(X, dtype=float).reshape(-1, s.d_x)
        Xs = (X - s.lower) / (s.upper - s.lower)
        if self.kind == "gp":
            Xs = numeric_view(s, Xs, np.asarray(T, float).reshape(len(X), s.d_t))
        return Xs

    def latent_z(self, T):
        if self.hypers.latent is None:
            return None
        return self.hypers.latent.positions(np.asarray(T, float).reshape(-1, self.train.schema.d_t))

    def _train_features(self):
        f = self.__dict__.get("_tf")
        if f is None:
            f = (self.scaled_x(self.train.X, self.train.T), self.latent_z(self.train.T))
            object.__setattr__(self, "_tf", f)
        return f

    def _cross(self, X, T):
        Xs, Z = self.scaled_x(X, T), self.latent_z(T)
        Xt, Zt = self._train_features()
        r = correlation_matrix(Xs, self.hypers.omega, Z, Xt, Zt)
        return Xs, Z, r

    def _gls_pieces(self):
        p = self.__dict__.get("_gls")
        if p is None:
            Xt, _ = self._train_features()
            F = basis_matrix(self.basis, Xt[:, : self.train.schema.d_x] if self.kind == "gp" else Xt)
            Ft = solve_triangular(self.chol, F, lower=True)
            p = (Ft, np.linalg.inv(Ft.T @ Ft))
            object.__setattr__(self, "_gls", p)
        return p

    def _f(self, Xs):
        return basis_matrix(self.basis, Xs[:, : self.train.schema.d_x] if self.kind == "gp" else Xs)

    def predict(self, X, T=None, return_std_scale: bool = False):
        """Posterior mean and variance at a batch of inputs (original units)."""
        s = self.train.schema
        X = np.asarray(X, dtype=float).reshape(-1, s.d_x)
        T = np.zeros((len(X), 0)) if T is None else np.asarray(T, dtype=float).reshape(len(X), s.d_t)
        Xs, _, r = self._cross(X, T)
        f = self._f(Xs)
        mean_s = f @ self.beta + r @ self.alpha
        Ft, Ginv = self._gls_pieces()
        v = solve_triangular(self.chol, r.T, lower=True)
        h = f - v.T @ Ft
        var_s = self.sigma2 * (1.0 - np.sum(v * v, axis=0) + np.einsum("ij,jk,ik->i", h, Ginv, h))
        var_s = np.where(var_s < 0.0, 0.0, var_s)
        if return_std_scale:
            return mean_s, var_s
        return self.y_mean + self.y_std * mean_s, self.y_std ** 2 * var_s

    def predict_cov(self, w: MixedSample, w2: MixedSample) -> float:
        X = np.array([w.x, w2.x], dtype=float).reshape(2, self.train.schema.d_x)
        T = np.array([w.t, w2.t], dtype=float).reshape(2, self.train.schema.d_t)
        Xs, Z, r = self._cross(X, T)
        c12 = correlation_matrix(Xs[:1], self.hypers.omega, None if Z is None else Z[:1],
                                 Xs[1:], None if Z is None else Z[1:])[0, 0]
        f = self._f(Xs)
        Ft, Ginv = self._gls_pieces()
        v = solve_triangular(self.chol, r.T, lower=True)
        h = f - v.T @ Ft
        cov_s = self.sigma2 * (c12 - v[:, 0] @ v[:, 1] + h[0] @ Ginv @ h[1])
        return float(self.y_std ** 2 * cov_s)


def predict(model: FittedModel, w_star: MixedSample) -> PredictivePoint:
    m, v = model.predict(np.array([w_star.x]), np.array([w_star.t]))
    return PredictivePoint(float(m[0]), float(v[0]))


def predict_cov(model: FittedModel, w_star: MixedSample, w_prime: MixedSample) -> float:
    return model.predict_cov(w_star, w_prime)
