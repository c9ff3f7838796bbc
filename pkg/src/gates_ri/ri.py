"""Cross-fitted GATES with randomization-inference confidence intervals.

Every fold is used once as evaluation data for a proxy trained on the other
folds. The per-fold estimator is the sorted-group contrast

    gamma_k = K/N1 * sum_i Y_i D_i f_k(Z_i) - K/N0 * sum_i Y_i (1 - D_i) f_k(Z_i),

i.e. a difference in arm means of ``W_ik = K * Y_i * f_k(Z_i)``. Fold estimates
are averaged, and the variance of the average is

    V = max(vbar - (L-1)/L * V2, vbar / L),

with ``vbar`` the mean within-fold Neyman variance and ``V2`` the sample
variance of the fold estimates (the Nadeau-Bengio correction for overlapping
training sets).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Any, Callable, Optional

import numpy as np

from ._seeding import derive_seed
from .data import CrossFit, DataValidationError, ExperimentDataset, SplitPlan, arm_counts, make_split_plan
from .grouping import assign_groups, compute_cutoffs
from .learners import LassoLearner, Learner

MAX_PLAN_ATTEMPTS = 100

VARIANCE_METHOD = "neyman-plugin + nadeau-bengio correction (approximation)"


class EstimationError(RuntimeError):
    """Estimation could not be completed (degenerate folds, learner failure)."""


def normal_quantile(level: float) -> float:
    return NormalDist().inv_cdf(level)


@dataclass
class SplitGatesEstimate:
    split_index: int
    gamma_hat: np.ndarray
    neyman_var: np.ndarray
    neyman_cov: np.ndarray
    n_treated: int
    n_control: int
    group_counts: np.ndarray  # (K, 2): treated, control
    cutoffs: np.ndarray  # interior c_1 .. c_(K-1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "split_index": self.split_index,
            "gamma_hat": self.gamma_hat.tolist(),
            "neyman_var": self.neyman_var.tolist(),
            "neyman_cov": self.neyman_cov.tolist(),
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "group_counts": self.group_counts.tolist(),
            "cutoffs": self.cutoffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SplitGatesEstimate":
        return cls(
            int(d["split_index"]),
            np.asarray(d["gamma_hat"], dtype=float),
            np.asarray(d["neyman_var"], dtype=float),
            np.asarray(d["neyman_cov"], dtype=float),
            int(d["n_treated"]),
            int(d["n_control"]),
            np.asarray(d["group_counts"], dtype=np.int64),
            np.asarray(d["cutoffs"], dtype=float),
        )


def _arm_cov(w: np.ndarray, pooled: np.ndarray) -> np.ndarray:
    if w.shape[0] < 2:
        # single-unit arm: fall back to the variance of the pooled fold
        return pooled
    return np.atleast_2d(np.cov(w, rowvar=False))


def estimate_gates_split(
    y: np.ndarray, d: np.ndarray, scores: np.ndarray, k_groups: int, split_index: int = 0
) -> SplitGatesEstimate:
    """GATES on one evaluation fold, with groups formed from ``scores``.

    The conditional variance treats the grouping as fixed and is the Neyman
    variance of the arm-mean difference of ``K * Y * f_k``. Its off-diagonal
    entries are kept so that contrasts between groups get their exact
    within-fold variance.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d)
    treated = d == 1
    n1 = int(treated.sum())
    n0 = int(y.shape[0] - n1)
    if n1 == 0 or n0 == 0:
        raise EstimationError("evaluation fold is missing a treatment arm")
    groups = assign_groups(scores, k_groups)
    onehot = (groups.group_of[:, None] == np.arange(1, k_groups + 1)[None, :]).astype(float)
    w = k_groups * y[:, None] * onehot
    gamma = w[treated].mean(axis=0) - w[~treated].mean(axis=0)
    pooled = np.atleast_2d(np.cov(w, rowvar=False))
    cov = _arm_cov(w[treated], pooled) / n1 + _arm_cov(w[~treated], pooled) / n0
    counts = np.column_stack(
        [onehot[treated].sum(axis=0), onehot[~treated].sum(axis=0)]
    ).astype(np.int64)
    return SplitGatesEstimate(
        split_index,
        gamma,
        np.clip(np.diag(cov).copy(), 0.0, None),
        cov,
        n1,
        n0,
        counts,
        compute_cutoffs(scores, k_groups).interior,
    )


def nadeau_bengio(estimates: np.ndarray, cond_var: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate ``(L, K)`` fold estimates and conditional variances.

    Returns ``(mean, variance, across_split_var)``.
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    cond_var = np.atleast_2d(np.asarray(cond_var, dtype=float))
    n_splits = estimates.shape[0]
    if n_splits < 2:
        raise ValueError("variance correction needs L >= 2 splits")
    mean = estimates.mean(axis=0)
    across = ((estimates - mean) ** 2).sum(axis=0) / (n_splits - 1)
    vbar = cond_var.mean(axis=0)
    raw = vbar - (n_splits - 1) / n_splits * across
    return mean, np.maximum(raw, vbar / n_splits), across


def variance_nadeau_bengio(per_split: list[SplitGatesEstimate], n_splits: Optional[int] = None) -> np.ndarray:
    if n_splits is not None and n_splits != len(per_split):
        raise ValueError(f"expected {n_splits} split estimates, got {len(per_split)}")
    est = np.array([s.gamma_hat for s in per_split])
    var = np.array([s.neyman_var for s in per_split])
    return nadeau_bengio(est, var)[1]


@dataclass
class GatesResult:
    gamma_hat: np.ndarray
    variance: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    alpha: float
    per_split: list[SplitGatesEstimate]
    across_split_var: np.ndarray
    l_splits: int
    k_groups: int
    learner_id: str
    seed: int
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def ci_length(self) -> np.ndarray:
        return self.ci_upper - self.ci_lower

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": "ri",
            "gamma_hat": self.gamma_hat.tolist(),
            "variance": self.variance.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "alpha": self.alpha,
            "across_split_var": self.across_split_var.tolist(),
            "l_splits": self.l_splits,
            "k_groups": self.k_groups,
            "learner_id": self.learner_id,
            "seed": self.seed,
            "metadata": self.metadata,
            "per_split": [s.to_dict() for s in self.per_split],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GatesResult":
        arr = lambda key: np.asarray(d[key], dtype=float)  # noqa: E731
        return cls(
            arr("gamma_hat"),
            arr("variance"),
            arr("ci_lower"),
            arr("ci_upper"),
            float(d["alpha"]),
            [SplitGatesEstimate.from_dict(s) for s in d["per_split"]],
            arr("across_split_var"),
            int(d["l_splits"]),
            int(d["k_groups"]),
            str(d["learner_id"]),
            int(d["seed"]),
            dict(d.get("metadata", {})),
        )


def _usable(plan: SplitPlan, d: np.ndarray) -> bool:
    for ell, fold in enumerate(plan.folds):
        t, c = arm_counts(d, fold)
        if t < 1 or c < 1:
            return False
        t, c = arm_counts(d, plan.complement(ell))
        if t < 2 or c < 2:
            return False
    return True


def cross_fit_plan(data: ExperimentDataset, n_splits: int, seed: int) -> SplitPlan:
    """A cross-fitting plan whose folds all contain both arms (up to 100 redraws)."""
    for attempt in range(MAX_PLAN_ATTEMPTS):
        plan = make_split_plan(data.n, CrossFit(n_splits), derive_seed(seed, 0, attempt))
        if _usable(plan, data.d):
            return plan
    raise EstimationError(f"no {n_splits}-fold plan with both arms in every fold after {MAX_PLAN_ATTEMPTS} draws")


def cross_fit_gates(
    data: ExperimentDataset,
    n_splits: int = 3,
    k_groups: int = 5,
    learner: Optional[Learner] = None,
    alpha: float = 0.05,
    seed: int = 0,
    *,
    outcome: Optional[np.ndarray] = None,
    return_models: bool = False,
):
    """Cross-fitted GATES estimate with normal confidence intervals.

    ``outcome`` replaces ``data.y`` in the GATES estimator only; proxies are
    always trained on ``data.y``. With ``return_models=True`` the fitted proxy
    of each fold is returned alongside the result.
    """
    if n_splits < 2:
        raise DataValidationError("cross-fitting needs L >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    learner = learner or LassoLearner()
    y_est = data.y if outcome is None else np.asarray(outcome, dtype=float)
    if y_est.shape != data.y.shape:
        raise ValueError("outcome must align with the dataset rows")
    plan = cross_fit_plan(data, n_splits, seed)
    per_split, models = [], []
    for ell, fold in enumerate(plan.folds):
        if len(fold) < k_groups:
            raise DataValidationError(f"fold of size {len(fold)} cannot hold K={k_groups} groups")
        try:
            model = learner.fit_proxy(data.subset(plan.complement(ell)), seed=derive_seed(seed, 1, ell))
            scores = model.predict(data.z[fold])
        except Exception as exc:  # learner failure surfaces as an estimation error
            raise EstimationError(f"learner failed on fold {ell}: {exc}") from exc
        per_split.append(estimate_gates_split(y_est[fold], data.d[fold], scores, k_groups, ell))
        models.append(model)
    result = aggregate_splits(per_split, alpha, learner.learner_id, seed)
    return (result, models) if return_models else result


def aggregate_splits(per_split: list[SplitGatesEstimate], alpha: float, learner_id: str, seed: int) -> GatesResult:
    est = np.array([s.gamma_hat for s in per_split])
    var = np.array([s.neyman_var for s in per_split])
    gamma, variance, across = nadeau_bengio(est, var)
    half = normal_quantile(1 - alpha / 2) * np.sqrt(variance)
    return GatesResult(
        gamma,
        variance,
        gamma - half,
        gamma + half,
        alpha,
        per_split,
        across,
        len(per_split),
        est.shape[1],
        learner_id,
        int(seed),
        {
            "estimator": "sorted-group arm-mean contrast, rank-based groups (group 1 = highest proxy score)",
            "variance_method": VARIANCE_METHOD,
            "ci": "normal",
        },
    )


def clan(
    data: ExperimentDataset,
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n_splits: int = 3,
    k_groups: int = 5,
    learner: Optional[Learner] = None,
    alpha: float = 0.05,
    seed: int = 0,
) -> GatesResult:
    """Sorted-group averages of ``g(y, z)`` in place of the outcome.

    Splits and proxies are the same as :func:`cross_fit_gates` with the same
    seed; only the quantity averaged within groups changes.
    """
    values = np.asarray(g(data.y, data.z), dtype=float)
    if values.shape != data.y.shape or not np.all(np.isfinite(values)):
        raise ValueError("g must return one finite value per unit")
    result = cross_fit_gates(data, n_splits, k_groups, learner, alpha, seed, outcome=values)
    result.metadata["clan"] = True
    return result


@dataclass
class ContrastResult:
    estimate: float
    variance: float
    ci_lower: float
    ci_upper: float
    first: int
    second: int
    per_split_estimates: np.ndarray
    per_split_variances: np.ndarray
    across_split_var: float
    alpha: float

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["per_split_estimates"] = self.per_split_estimates.tolist()
        d["per_split_variances"] = self.per_split_variances.tolist()
        return d


def contrast_from_splits(
    deltas: np.ndarray, variances: np.ndarray, alpha: float = 0.05, first: int = 0, second: int = 0
) -> ContrastResult:
    deltas = np.asarray(deltas, dtype=float)
    variances = np.asarray(variances, dtype=float)
    mean, var, across = nadeau_bengio(deltas[:, None], variances[:, None])
    half = normal_quantile(1 - alpha / 2) * float(np.sqrt(var[0]))
    est = float(mean[0])
    return ContrastResult(
        est, float(var[0]), est - half, est + half, first, second, deltas, variances, float(across[0]), alpha
    )


def heterogeneity_contrast(
    result: GatesResult, first: Optional[int] = None, second: int = 1, alpha: Optional[float] = None
) -> ContrastResult:
    """``gamma_first - gamma_second`` (default group K minus group 1) with a corrected CI.

    The within-fold variance of the difference uses the full Neyman covariance,
    so the shared arm denominators are accounted for.
    """
    k = result.k_groups
    if k < 2:
        raise ValueError("contrast needs K >= 2")
    first = k if first is None else first
    if not (1 <= first <= k and 1 <= second <= k):
        raise ValueError("group indices must lie in 1..K")
    a, b = first - 1, second - 1
    deltas = np.array([s.gamma_hat[a] - s.gamma_hat[b] for s in result.per_split])
    vars_ = np.array(
        [max(s.neyman_cov[a, a] + s.neyman_cov[b, b] - 2 * s.neyman_cov[a, b], 0.0) for s in result.per_split]
    )
    return contrast_from_splits(deltas, vars_, result.alpha if alpha is None else alpha, first, second)
