"""Proxy-score learners.

The workhorse is a cyclic coordinate-descent LASSO on standardized
covariates. It is used two ways:

* as a T-learner CATE proxy, ``S(z) = mu1(z) - mu0(z)`` with one LASSO per arm;
* as a baseline-outcome model fitted on control units (SSRI baseline adjustment).

The inner loop runs on the Gram matrix and is compiled with numba, since the
Monte Carlo harness fits tens of thousands of these models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Union

import numpy as np
from numba import njit

from .data import ExperimentDataset

TOL = 1e-7
MAX_SWEEPS = 10_000
N_LAMBDA = 50
LAMBDA_MIN_RATIO = 1e-3


class LearnerError(RuntimeError):
    """A learner could not be fitted on the supplied data."""


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


@njit(cache=True)
def _cd(gram, xty, lam, beta, tol, max_sweeps, yty, history):
    # gram = X'X/m, xty = X'y/m on the standardized, centered scale.
    # history (len >= 1 to record) receives the penalized objective after each sweep.
    p = gram.shape[0]
    grad = xty - gram @ beta
    record = history.shape[0] > 0
    if record:
        history[0] = 0.5 * yty - beta @ xty + 0.5 * beta @ gram @ beta + lam * np.abs(beta).sum()
    sweeps = 0
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            zj = grad[j] + gjj * old
            if zj > lam:
                new = (zj - lam) / gjj
            elif zj < -lam:
                new = (zj + lam) / gjj
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= gram[k, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        sweeps = sweep + 1
        if record and sweeps < history.shape[0]:
            history[sweeps] = (
                0.5 * yty - beta @ xty + 0.5 * beta @ gram @ beta + lam * np.abs(beta).sum()
            )
        if max_delta < tol:
            break
    return sweeps


@njit(cache=True)
def _cd_path(gram, xty, lambdas, tol, max_sweeps, yty):
    p = gram.shape[0]
    out = np.zeros((lambdas.shape[0], p))
    beta = np.zeros(p)
    empty = np.zeros(0)
    for i in range(lambdas.shape[0]):
        _cd(gram, xty, lambdas[i], beta, tol, max_sweeps, yty, empty)
        out[i] = beta
    return out


@dataclass(frozen=True)
class Standardized:
    """Centered/scaled problem data. Zero-variance columns keep scale 1 and are masked out."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    gram: np.ndarray
    xty: np.ndarray
    yty: float
    m: int

    @classmethod
    def from_data(cls, x: np.ndarray, y: np.ndarray) -> "Standardized":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError("lasso needs x of shape (m, p) and y of shape (m,), m >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite input to lasso")
        m = x.shape[0]
        mean = x.mean(axis=0)
        sd = x.std(axis=0)
        const = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(const, 1.0, sd)
        xs = (x - mean) / scale
        xs[:, const] = 0.0
        y_mean = float(y.mean())
        yc = y - y_mean
        gram = xs.T @ xs / m
        xty = xs.T @ yc / m
        return cls(mean, scale, y_mean, gram, xty, float(yc @ yc / m), m)

    @property
    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.xty))) if self.xty.size else 0.0

    def to_original(self, beta_std: np.ndarray) -> np.ndarray:
        """Map standardized slopes (``(p,)`` or ``(n_lambda, p)``) to ``[intercept, slopes]``."""
        slopes = beta_std / self.x_scale
        intercept = self.y_mean - slopes @ self.x_mean
        if slopes.ndim == 1:
            return np.concatenate([[intercept], slopes])
        return np.column_stack([intercept, slopes])


def lasso_fit(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    *,
    tol: float = TOL,
    max_sweeps: int = MAX_SWEEPS,
    return_history: bool = False,
):
    """LASSO by cyclic coordinate descent.

    Minimizes ``(1/2m)||y - b0 - X b||^2 + lam * ||b||_1`` with ``X`` centered
    and scaled to unit (population) standard deviation; the intercept is not
    penalized. Returns ``[b0, b1..bp]`` on the original covariate scale.

    With ``return_history=True`` also returns the standardized-scale
    coefficients and the objective value after every sweep.
    """
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be a finite non-negative number")
    st = Standardized.from_data(x, y)
    beta = np.zeros(st.gram.shape[0])
    history = np.full(max_sweeps + 1, np.nan) if return_history else np.zeros(0)
    sweeps = _cd(st.gram, st.xty, float(lam), beta, tol, max_sweeps, st.yty, history)
    coef = st.to_original(beta)
    if return_history:
        return coef, beta, history[: sweeps + 1]
    return coef


def lambda_grid(lambda_max: float, n_lambda: int = N_LAMBDA, ratio: float = LAMBDA_MIN_RATIO) -> np.ndarray:
    return lambda_max * np.logspace(0.0, np.log10(ratio), n_lambda)


def lasso_path(x: np.ndarray, y: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Warm-started coefficients for a decreasing ``lambdas`` grid, shape ``(n_lambda, p+1)``."""
    st = Standardized.from_data(x, y)
    path = _cd_path(st.gram, st.xty, np.asarray(lambdas, dtype=float), TOL, MAX_SWEEPS, st.yty)
    return st.to_original(path)


def _predict(coef: np.ndarray, z: np.ndarray) -> np.ndarray:
    return coef[0] + np.asarray(z, dtype=float) @ coef[1:]


@dataclass(frozen=True)
class Fixed:
    lam: float


@dataclass(frozen=True)
class CV:
    k_folds: int = 5


LambdaRule = Union[Fixed, CV]


def lasso_cv(x: np.ndarray, y: np.ndarray, k_folds: int = 5, seed: int = 0) -> tuple[np.ndarray, float]:
    """k-fold CV over a 50-point log grid from ``lambda_max`` to ``1e-3 * lambda_max``.

    Returns the full-data coefficients at the MSE-minimizing lambda, and that lambda.
    """
    m = x.shape[0]
    st = Standardized.from_data(x, y)
    lmax = st.lambda_max
    if lmax <= 0.0:
        return st.to_original(np.zeros(st.gram.shape[0])), 0.0
    grid = lambda_grid(lmax)
    k = min(k_folds, m)
    if k < 2:
        raise LearnerError("cross-validation needs at least two observations")
    fold_of = np.empty(m, dtype=np.int64)
    fold_of[np.random.default_rng(seed).permutation(m)] = np.arange(m) % k
    sse = np.zeros(grid.shape[0])
    for f in range(k):
        test = fold_of == f
        path = lasso_path(x[~test], y[~test], grid)
        pred = path[:, :1] + path[:, 1:] @ x[test].T
        sse += ((pred - y[test]) ** 2).sum(axis=1)
    best = int(np.argmin(sse))
    path = _cd_path(st.gram, st.xty, grid[: best + 1], TOL, MAX_SWEEPS, st.yty)
    return st.to_original(path[-1]), float(grid[best])


def _fit_arm(x: np.ndarray, y: np.ndarray, rule: LambdaRule, seed: int) -> tuple[np.ndarray, float]:
    if isinstance(rule, Fixed):
        return lasso_fit(x, y, rule.lam), float(rule.lam)
    if isinstance(rule, CV):
        return lasso_cv(x, y, rule.k_folds, seed)
    raise TypeError(f"unknown lambda rule {rule!r}")


class Proxy(Protocol):
    def predict(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ScoreModel:
    """T-learner proxy ``S(z) = mu1(z) - mu0(z)``; coefficients are ``[intercept, slopes]``."""

    coef_treated: np.ndarray
    coef_control: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    lambdas: tuple[float, float] = (0.0, 0.0)
    learner_id: str = "lasso-tlearner"

    def predict(self, z: np.ndarray) -> np.ndarray:
        return _predict(self.coef_treated - self.coef_control, z)

    def predict_arms(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _predict(self.coef_treated, z), _predict(self.coef_control, z)


@dataclass(frozen=True)
class BaselineModel:
    """Control-arm outcome model ``B(z)``."""

    coef: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    lam: float = 0.0

    def predict(self, z: np.ndarray) -> np.ndarray:
        return _predict(self.coef, z)


def _scale(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sd = z.std(axis=0)
    return z.mean(axis=0), np.where(sd > 0, sd, 1.0)


def fit_proxy(train: ExperimentDataset, lambda_rule: LambdaRule = CV(), seed: int = 0) -> ScoreModel:
    """Fit one LASSO per arm on ``train`` and return their difference as a score model."""
    treated = train.d == 1
    if treated.sum() < 2 or (~treated).sum() < 2:
        raise LearnerError("each arm needs at least 2 training units")
    c1, l1 = _fit_arm(train.z[treated], train.y[treated], lambda_rule, seed)
    c0, l0 = _fit_arm(train.z[~treated], train.y[~treated], lambda_rule, seed + 1)
    mean, scale = _scale(train.z)
    return ScoreModel(c1, c0, mean, scale, (l1, l0), _rule_id(lambda_rule))


def fit_baseline(train: ExperimentDataset, k_folds: int = 5, seed: int = 0) -> BaselineModel:
    """Cross-validated LASSO of outcome on covariates among control units."""
    control = train.d == 0
    if control.sum() < 2:
        raise LearnerError("baseline model needs at least 2 control units")
    coef, lam = lasso_cv(train.z[control], train.y[control], k_folds, seed)
    mean, scale = _scale(train.z[control])
    return BaselineModel(coef, mean, scale, lam)


def _rule_id(rule: LambdaRule) -> str:
    if isinstance(rule, Fixed):
        return f"lasso-tlearner(lambda={rule.lam:g})"
    return f"lasso-tlearner(cv={rule.k_folds})"


@dataclass(frozen=True)
class LassoLearner:
    """The learner spec passed to the estimators: T-learner proxy plus CV baseline."""

    lambda_rule: LambdaRule = field(default_factory=CV)
    baseline_folds: int = 5

    @property
    def learner_id(self) -> str:
        return _rule_id(self.lambda_rule)

    def fit_proxy(self, train: ExperimentDataset, seed: int = 0) -> ScoreModel:
        return fit_proxy(train, self.lambda_rule, seed)

    def fit_baseline(self, train: ExperimentDataset, seed: int = 0) -> BaselineModel:
        return fit_baseline(train, self.baseline_folds, seed)


class Learner(Protocol):
    learner_id: str

    def fit_proxy(self, train: ExperimentDataset, seed: int = 0) -> Proxy: ...

    def fit_baseline(self, train: ExperimentDataset, seed: int = 0) -> Proxy: ...


def default_learner(lambda_rule: Optional[LambdaRule] = None) -> LassoLearner:
    return LassoLearner(lambda_rule or CV())
