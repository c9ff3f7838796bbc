"""Split-sample robust inference (SSRI) over repeated main/auxiliary splits.

Each split trains the proxy (and optionally a baseline outcome model) on the
auxiliary fold, estimates GATES on the main fold, and forms a conditional
confidence interval. The unconditional interval is the elementwise median of
the lower bounds and of the upper bounds across splits.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np

from ._seeding import derive_seed
from .data import DataValidationError, ExperimentDataset, MainAux, SplitPlan, arm_counts, make_split_plan
from .learners import LassoLearner, Learner
from .ri import MAX_PLAN_ATTEMPTS, EstimationError, estimate_gates_split, normal_quantile

MAX_LEARNER_RETRIES = 10

LevelAdjust = Literal["halved", "nominal"]


@dataclass
class SsriSplitRecord:
    split_index: int
    gamma_hat: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    neyman_var: np.ndarray
    baseline_used: bool
    wall_clock: float  # CPU seconds spent on this split

    def to_dict(self) -> dict[str, Any]:
        return {
            "split_index": self.split_index,
            "gamma_hat": self.gamma_hat.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "neyman_var": self.neyman_var.tolist(),
            "baseline_used": self.baseline_used,
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SsriSplitRecord":
        return cls(
            int(d["split_index"]),
            np.asarray(d["gamma_hat"], dtype=float),
            np.asarray(d["ci_lower"], dtype=float),
            np.asarray(d["ci_upper"], dtype=float),
            np.asarray(d["neyman_var"], dtype=float),
            bool(d["baseline_used"]),
            float(d["wall_clock"]),
        )


def median_aggregate(records: list[SsriSplitRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elementwise medians ``(point, ci_lower, ci_upper)``; even counts take the midpoint."""
    if not records:
        raise ValueError("median_aggregate needs at least one record")
    point = np.median([r.gamma_hat for r in records], axis=0)
    lower = np.median([r.ci_lower for r in records], axis=0)
    upper = np.median([r.ci_upper for r in records], axis=0)
    return point, lower, upper


@dataclass
class SsriResult:
    point_median: np.ndarray
    point_mean: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n_splits: int
    main_fraction: float
    alpha: float
    records: list[SsriSplitRecord]
    total_wall_clock: float
    k_groups: int
    baseline: bool
    level_adjust: str
    learner_id: str
    seed: int
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def ci_length(self) -> np.ndarray:
        return self.ci_upper - self.ci_lower

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": "ssri",
            "point_median": self.point_median.tolist(),
            "point_mean": self.point_mean.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "n_splits": self.n_splits,
            "main_fraction": self.main_fraction,
            "alpha": self.alpha,
            "k_groups": self.k_groups,
            "baseline": self.baseline,
            "level_adjust": self.level_adjust,
            "learner_id": self.learner_id,
            "seed": self.seed,
            "total_wall_clock": self.total_wall_clock,
            "metadata": self.metadata,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SsriResult":
        arr = lambda key: np.asarray(d[key], dtype=float)  # noqa: E731
        return cls(
            arr("point_median"),
            arr("point_mean"),
            arr("ci_lower"),
            arr("ci_upper"),
            int(d["n_splits"]),
            float(d["main_fraction"]),
            float(d["alpha"]),
            [SsriSplitRecord.from_dict(r) for r in d["records"]],
            float(d["total_wall_clock"]),
            int(d["k_groups"]),
            bool(d["baseline"]),
            str(d["level_adjust"]),
            str(d["learner_id"]),
            int(d["seed"]),
            dict(d.get("metadata", {})),
        )


def _usable(plan: SplitPlan, d: np.ndarray) -> bool:
    t, c = arm_counts(d, plan.main)
    if t < 1 or c < 1:
        return False
    t, c = arm_counts(d, plan.aux)
    return t >= 2 and c >= 2


def conditional_level(alpha: float, level_adjust: LevelAdjust) -> float:
    """Coverage level of each split's conditional interval."""
    if level_adjust == "halved":
        return 1 - alpha / 2
    if level_adjust == "nominal":
        return 1 - alpha
    raise ValueError(f"unknown level_adjust {level_adjust!r}")


def _one_split(
    data: ExperimentDataset,
    s: int,
    main_fraction: float,
    k_groups: int,
    learner: Learner,
    baseline: bool,
    z_crit: float,
    seed: int,
):
    failures = 0
    last_error: Optional[Exception] = None
    for attempt in range(MAX_PLAN_ATTEMPTS):
        plan = make_split_plan(data.n, MainAux(main_fraction), derive_seed(seed, 2, s, attempt))
        if not _usable(plan, data.d):
            continue
        start = time.process_time()
        try:
            aux = data.subset(plan.aux)
            model = learner.fit_proxy(aux, seed=derive_seed(seed, 3, s, attempt))
            z_main = data.z[plan.main]
            y_main = data.y[plan.main]
            if baseline:
                base = learner.fit_baseline(aux, seed=derive_seed(seed, 4, s, attempt))
                y_main = y_main - base.predict(z_main)
            scores = model.predict(z_main)
        except Exception as exc:
            failures += 1
            last_error = exc
            if failures >= MAX_LEARNER_RETRIES:
                raise EstimationError(f"learner failed {failures} times on split {s}: {exc}") from exc
            continue
        est = estimate_gates_split(y_main, data.d[plan.main], scores, k_groups, s)
        half = z_crit * np.sqrt(est.neyman_var)
        elapsed = time.process_time() - start
        record = SsriSplitRecord(
            s, est.gamma_hat, est.gamma_hat - half, est.gamma_hat + half, est.neyman_var, baseline, elapsed
        )
        return record, model
    detail = f": {last_error}" if last_error else ""
    raise EstimationError(f"split {s}: no usable main/aux split after {MAX_PLAN_ATTEMPTS} draws{detail}")


def ssri_gates(
    data: ExperimentDataset,
    n_splits: int = 250,
    main_fraction: float = 0.33,
    k_groups: int = 5,
    learner: Optional[Learner] = None,
    alpha: float = 0.05,
    baseline: bool = True,
    seed: int = 0,
    level_adjust: LevelAdjust = "halved",
    *,
    return_models: bool = False,
):
    """SSRI confidence intervals for GATES.

    Split ``s`` draws its partition and learner seeds from ``(seed, s)``, so the
    output does not depend on the order in which splits are run.
    ``total_wall_clock`` is the summed CPU time of the splits.
    """
    if n_splits < 1:
        raise DataValidationError("SSRI needs at least one split")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    learner = learner or LassoLearner()
    z_crit = normal_quantile(1 - (1 - conditional_level(alpha, level_adjust)) / 2)
    main_n = round(data.n * main_fraction)
    if main_n < k_groups:
        raise DataValidationError(f"main fold of about {main_n} units cannot hold K={k_groups} groups")
    records, models = [], []
    for s in range(n_splits):
        record, model = _one_split(data, s, main_fraction, k_groups, learner, baseline, z_crit, seed)
        records.append(record)
        models.append(model)
    point, lower, upper = median_aggregate(records)
    result = SsriResult(
        point,
        np.mean([r.gamma_hat for r in records], axis=0),
        lower,
        upper,
        n_splits,
        main_fraction,
        alpha,
        records,
        float(sum(r.wall_clock for r in records)),
        k_groups,
        baseline,
        level_adjust,
        learner.learner_id + ("+baseline" if baseline else ""),
        int(seed),
        {
            "estimator": "sorted-group arm-mean contrast on the main fold (not weighted OLS)",
            "aggregation": "median of conditional bounds",
            "conditional_level": conditional_level(alpha, level_adjust),
        },
    )
    return (result, models) if return_models else result
