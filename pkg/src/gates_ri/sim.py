"""Synthetic data-generating processes and the coverage/length/compute Monte Carlo harness.

The three heterogeneous DGPs (linear, polynomial, step-change effects) share
a baseline surface over ``p = 10`` standard-normal covariates::

    baseline(z) = z1 + 0.7 z3 + 0.5 z4^2
    linear:      cate(z) = 1 + z1 - 0.5 z2
    polynomial:  cate(z) = 0.5 z1^2 + z1 z2 - 0.5
    step:        cate(z) = 2 * 1{z1 > 0.5} - 1{z2 < -0.5}

``zero`` (no effect) and ``constant`` (effect 1 everywhere) are included for
null checks. Noise enters through ``Y(0)`` only, so ``Y(1) - Y(0) = cate(Z)``.

The estimand for a replicate is the group-average CATE in a large fresh
population, grouped by the replicate's own trained proxies and averaged over
them (L proxies for RI, S for SSRI). Averaging that over replicates gives the
reported truth.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from ._seeding import derive_seed
from .data import CrossFit, ExperimentDataset, MainAux, make_split_plan
from .grouping import descending_order, group_sizes
from .learners import LassoLearner, Proxy
from .ri import cross_fit_gates, cross_fit_plan
from .ssri import ssri_gates

log = logging.getLogger(__name__)

DGP_KINDS = ("linear", "polynomial", "step", "zero", "constant")
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class Dgp:
    kind: str = "linear"
    p: int = 10
    noise_sd: float = 1.0
    treat_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in DGP_KINDS:
            raise ValueError(f"unknown DGP kind {self.kind!r}; choose from {DGP_KINDS}")
        if self.p < 4:
            raise ValueError("DGPs use covariates z1..z4, need p >= 4")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if not 0.0 < self.treat_prob < 1.0:
            raise ValueError("treat_prob must lie in (0, 1)")

    def baseline(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        return z[:, 0] + 0.7 * z[:, 2] + 0.5 * z[:, 3] ** 2

    def cate(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        z1, z2 = z[:, 0], z[:, 1]
        if self.kind == "linear":
            return 1.0 + z1 - 0.5 * z2
        if self.kind == "polynomial":
            return 0.5 * z1**2 + z1 * z2 - 0.5
        if self.kind == "step":
            return 2.0 * (z1 > 0.5) - 1.0 * (z2 < -0.5)
        if self.kind == "constant":
            return np.ones(z.shape[0])
        return np.zeros(z.shape[0])


@dataclass(frozen=True)
class PotentialOutcomes:
    y0: np.ndarray
    y1: np.ndarray
    cate: np.ndarray


def generate(dgp: Dgp, n: int, seed: int) -> tuple[ExperimentDataset, PotentialOutcomes]:
    """Draw ``n`` units; treatment is redrawn in the rare event that one arm is empty."""
    if n < 2:
        raise ValueError("need n >= 2")
    gen = np.random.default_rng(seed)
    z = gen.standard_normal((n, dgp.p))
    tau = dgp.cate(z)
    y0 = dgp.baseline(z) + dgp.noise_sd * gen.standard_normal(n)
    y1 = y0 + tau
    while True:
        d = (gen.random(n) < dgp.treat_prob).astype(np.int8)
        if 0 < d.sum() < n:
            break
    y = np.where(d == 1, y1, y0)
    return ExperimentDataset(y, d, z), PotentialOutcomes(y0, y1, tau)


class OracleProxy:
    """Uses the true CATE as the score."""

    learner_id = "oracle"

    def __init__(self, dgp: Dgp) -> None:
        self.dgp = dgp

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.dgp.cate(z)


@dataclass(frozen=True)
class Population:
    z: np.ndarray
    cate: np.ndarray


def draw_population(dgp: Dgp, size: int, seed: int) -> Population:
    z = np.random.default_rng(seed).standard_normal((size, dgp.p))
    return Population(z, dgp.cate(z))


def group_means(scores: np.ndarray, values: np.ndarray, k_groups: int) -> np.ndarray:
    """Mean of ``values`` within each rank-based score group (group 1 = highest scores)."""
    m = scores.shape[0]
    sizes = group_sizes(m, k_groups)
    if np.any(sizes == 0):
        raise ValueError("population too small: empty group")
    bounds = np.cumsum(sizes)[:-1]
    neg = -scores
    kth = np.unique(np.concatenate([bounds - 1, bounds]))
    part = np.partition(neg, kth)
    lo, hi = part[bounds - 1], part[bounds]
    if np.all(lo < hi):
        # boundaries are tie-free, so thresholding reproduces the rank groups exactly
        labels = np.searchsorted(hi, neg, side="right")
        return np.bincount(labels, weights=values, minlength=k_groups) / sizes
    order = descending_order(scores)
    sums = np.add.reduceat(values[order], np.concatenate([[0], bounds]))
    return sums / sizes


def true_gates(
    proxies: Proxy | Sequence[Proxy],
    k_groups: int,
    population: Population,
) -> np.ndarray:
    """Group-average CATE in ``population`` under each proxy's grouping, averaged over proxies."""
    if not isinstance(proxies, (list, tuple)):
        proxies = [proxies]
    return np.mean([group_means(p.predict(population.z), population.cate, k_groups) for p in proxies], axis=0)


@dataclass(frozen=True)
class MethodSpec:
    kind: str  # "ri" or "ssri"
    n_splits: int
    main_fraction: float = 0.33
    baseline: bool = True
    level_adjust: str = "halved"
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("ri", "ssri"):
            raise ValueError(f"method kind must be 'ri' or 'ssri', got {self.kind!r}")
        if self.kind == "ri" and self.n_splits < 2:
            raise ValueError("RI needs L >= 2")
        if self.kind == "ssri" and self.n_splits < 1:
            raise ValueError("SSRI needs S >= 1")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "ri":
            return f"RI(L={self.n_splits})"
        tag = "SSRI" if self.baseline else "SSRI-nobase"
        return f"{tag}(S={self.n_splits},main={self.main_fraction:g})"


PAPER_METHODS = (
    MethodSpec("ri", 3),
    MethodSpec("ssri", 250, 0.33, baseline=True),
    MethodSpec("ssri", 250, 0.33, baseline=False),
)


@dataclass(frozen=True)
class SimulationConfig:
    dgp: Dgp = field(default_factory=Dgp)
    sample_sizes: tuple[int, ...] = (100, 500, 2500)
    k_groups: int = 5
    methods: tuple[MethodSpec, ...] = PAPER_METHODS
    n_replicates: int = 200
    truth_replicates: int = 1000
    truth_population: int = 100_000
    alpha: float = 0.05
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        if len({m.name for m in self.methods}) != len(self.methods):
            raise ValueError("method names must be unique")
        max_l = max([m.n_splits for m in self.methods if m.kind == "ri"] + [2])
        for n in self.sample_sizes:
            if n < 2 * max(max_l, self.k_groups):
                raise ValueError(f"sample size {n} < 2 * max(L, K)")
        if self.truth_population < self.k_groups:
            raise ValueError("truth_population must be at least K")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["sample_sizes"] = list(self.sample_sizes)
        d["methods"] = [dict(asdict(m), name=m.name) for m in self.methods]
        d.pop("n_jobs")  # scheduling does not affect results
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimulationConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        dgp = d.pop("dgp", {})
        if isinstance(dgp, str):
            dgp = {"kind": dgp}
        methods = d.pop("methods", None)
        kwargs: dict[str, Any] = {"dgp": Dgp(**dgp)}
        if methods is not None:
            kwargs["methods"] = tuple(
                MethodSpec(**{k: v for k, v in m.items() if k != "name"}) for m in methods
            )
        if "sample_sizes" in d:
            d["sample_sizes"] = tuple(int(n) for n in d["sample_sizes"])
        kwargs.update(d)
        return cls(**kwargs)


@dataclass
class MethodOutcome:
    ok: bool
    covered: Optional[np.ndarray] = None
    length: Optional[np.ndarray] = None
    estimate: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    cpu_seconds: float = 0.0
    error: str = ""


def run_method(
    spec: MethodSpec,
    data: ExperimentDataset,
    k_groups: int,
    alpha: float,
    seed: int,
    population: Optional[Population],
    learner=None,
) -> MethodOutcome:
    """Run one configured method on one dataset and score it against the population truth."""
    learner = learner or LassoLearner()
    start = time.process_time()
    try:
        if spec.kind == "ri":
            res, models = cross_fit_gates(
                data, spec.n_splits, k_groups, learner, alpha, seed, return_models=True
            )
            estimate, lower, upper = res.gamma_hat, res.ci_lower, res.ci_upper
        else:
            res, models = ssri_gates(
                data,
                spec.n_splits,
                spec.main_fraction,
                k_groups,
                learner,
                alpha,
                spec.baseline,
                seed,
                spec.level_adjust,  # type: ignore[arg-type]
                return_models=True,
            )
            estimate, lower, upper = res.point_mean, res.ci_lower, res.ci_upper
    except Exception as exc:
        return MethodOutcome(False, cpu_seconds=time.process_time() - start, error=f"{type(exc).__name__}: {exc}")
    cpu = time.process_time() - start
    if population is None:
        return MethodOutcome(True, None, upper - lower, estimate, None, cpu)
    truth = true_gates(models, k_groups, population)
    covered = (lower <= truth) & (truth <= upper)
    return MethodOutcome(True, covered, upper - lower, estimate, truth, cpu)


def _replicate(config: SimulationConfig, n: int, r: int) -> list[MethodOutcome]:
    data, _ = generate(config.dgp, n, derive_seed(config.seed, 10, n, r))
    pop = draw_population(config.dgp, config.truth_population, derive_seed(config.seed, 12, n, r))
    return [
        run_method(spec, data, config.k_groups, config.alpha, derive_seed(config.seed, 11, n, r, i), pop)
        for i, spec in enumerate(config.methods)
    ]


def _truth_only(config: SimulationConfig, n: int, r: int) -> list[Optional[np.ndarray]]:
    """Replicate truth without inference.

    RI fits its L cross-fitting proxies. For SSRI every split's proxy is trained
    on an equally distributed auxiliary sample, so one split carries the same
    expectation.
    """
    data, _ = generate(config.dgp, n, derive_seed(config.seed, 10, n, r))
    pop = draw_population(config.dgp, config.truth_population, derive_seed(config.seed, 12, n, r))
    learner = LassoLearner()
    out: list[Optional[np.ndarray]] = []
    for i, spec in enumerate(config.methods):
        seed = derive_seed(config.seed, 11, n, r, i)
        try:
            if spec.kind == "ri":
                plan = cross_fit_plan(data, spec.n_splits, seed)
                models = [
                    learner.fit_proxy(data.subset(plan.complement(ell)), seed=derive_seed(seed, 1, ell))
                    for ell in range(spec.n_splits)
                ]
            else:
                plan = make_split_plan(data.n, MainAux(spec.main_fraction), derive_seed(seed, 2, 0, 0))
                models = [learner.fit_proxy(data.subset(plan.aux), seed=derive_seed(seed, 3, 0, 0))]
            out.append(true_gates(models, config.k_groups, pop))
        except Exception:
            out.append(None)
    return out


@dataclass
class CellStats:
    method: str
    n: int
    group: int
    coverage: float
    avg_ci_length: float
    bias: float
    truth: float
    n_valid: int


@dataclass
class MethodStats:
    method: str
    n: int
    n_valid: int
    failures: int
    mean_cpu_seconds: float = float("nan")


class SimulationAborted(RuntimeError):
    pass


@dataclass
class SimulationReport:
    config: dict[str, Any]
    cells: list[CellStats]
    methods: list[MethodStats]
    n_replicates: int

    def cell(self, method: str, n: int, group: int) -> CellStats:
        for c in self.cells:
            if c.method == method and c.n == n and c.group == group:
                return c
        raise KeyError((method, n, group))

    def column(self, attr: str, method: str, n: int) -> np.ndarray:
        """``attr`` for groups 1..K of one (method, n) cell block."""
        rows = sorted((c for c in self.cells if c.method == method and c.n == n), key=lambda c: c.group)
        if not rows:
            raise KeyError((method, n))
        return np.array([getattr(c, attr) for c in rows])

    def method_stats(self, method: str, n: int) -> MethodStats:
        for m in self.methods:
            if m.method == method and m.n == n:
                return m
        raise KeyError((method, n))

    @property
    def method_names(self) -> list[str]:
        return list(dict.fromkeys(c.method for c in self.cells))

    @property
    def sample_sizes(self) -> list[int]:
        return sorted({c.n for c in self.cells})

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        methods = []
        for m in self.methods:
            d = asdict(m)
            if not include_timing:
                d.pop("mean_cpu_seconds")
            methods.append(d)
        return {
            "config": self.config,
            "n_replicates": self.n_replicates,
            "methods": methods,
            "cells": [asdict(c) for c in self.cells],
        }

    def to_json(self, include_timing: bool = False) -> str:
        """Stable JSON. Timing is excluded by default since CPU time is not reproducible."""
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def timing_dict(self) -> dict[str, Any]:
        return {
            "methods": [
                {"method": m.method, "n": m.n, "mean_cpu_seconds": m.mean_cpu_seconds} for m in self.methods
            ]
        }

    def to_csv_rows(self) -> list[dict[str, Any]]:
        return [asdict(c) for c in self.cells]

    @classmethod
    def from_dict(cls, d: dict[str, Any], timing: Optional[dict[str, Any]] = None) -> "SimulationReport":
        cpu = {}
        if timing:
            cpu = {(t["method"], int(t["n"])): float(t["mean_cpu_seconds"]) for t in timing["methods"]}
        methods = []
        for m in d["methods"]:
            m = dict(m)
            key = (m["method"], int(m["n"]))
            if key in cpu:
                m["mean_cpu_seconds"] = cpu[key]
            methods.append(MethodStats(**m))
        return cls(d["config"], [CellStats(**c) for c in d["cells"]], methods, int(d["n_replicates"]))


def _tasks(config: SimulationConfig) -> Iterable[tuple[int, int]]:
    for n in config.sample_sizes:
        for r in range(config.n_replicates):
            yield n, r


def _run_task(args: tuple[SimulationConfig, int, int]) -> list[MethodOutcome]:
    return _replicate(*args)


def _run_truth_task(args: tuple[SimulationConfig, int, int]) -> list[Optional[np.ndarray]]:
    return _truth_only(*args)


def _map(fn, items: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n_jobs))))


def run_monte_carlo(config: SimulationConfig, n_jobs: Optional[int] = None) -> SimulationReport:
    """Run every configured method on ``n_replicates`` datasets per sample size.

    Results are independent of ``n_jobs``: each replicate derives its seeds
    from ``(config.seed, n, r)`` and outcomes are reduced in replicate order.
    """
    jobs = config.n_jobs if n_jobs is None else n_jobs
    tasks = [(config, n, r) for n, r in _tasks(config)]
    outcomes = _map(_run_task, tasks, jobs)
    extra = [
        (config, n, r) for n in config.sample_sizes for r in range(config.n_replicates, config.truth_replicates)
    ]
    extra_truths = _map(_run_truth_task, extra, jobs)

    by_n: dict[int, list[list[MethodOutcome]]] = {n: [] for n in config.sample_sizes}
    for (_, n, _), out in zip(tasks, outcomes):
        by_n[n].append(out)
    extra_by_n: dict[int, list[list[Optional[np.ndarray]]]] = {n: [] for n in config.sample_sizes}
    for (_, n, _), out in zip(extra, extra_truths):
        extra_by_n[n].append(out)

    cells, mstats = [], []
    for n in config.sample_sizes:
        for i, spec in enumerate(config.methods):
            rows = [rep[i] for rep in by_n[n]]
            good = [o for o in rows if o.ok]
            failures = len(rows) - len(good)
            if failures > MAX_FAILURE_RATE * len(rows):
                errors = sorted({o.error for o in rows if not o.ok})
                raise SimulationAborted(
                    f"{spec.name} at n={n}: {failures}/{len(rows)} replicates failed; errors: {errors[:5]}"
                )
            if failures:
                log.warning("%s at n=%d: %d failed replicates excluded", spec.name, n, failures)
            if not good:
                raise SimulationAborted(f"{spec.name} at n={n}: no successful replicates")
            covered = np.array([o.covered for o in good], dtype=float)
            length = np.array([o.length for o in good])
            est = np.array([o.estimate for o in good])
            truth = np.array([o.truth for o in good])
            truth_pool = list(truth) + [t[i] for t in extra_by_n[n] if t[i] is not None]
            truth_mean = np.mean(truth_pool, axis=0)
            for k in range(config.k_groups):
                cells.append(
                    CellStats(
                        spec.name,
                        n,
                        k + 1,
                        float(covered[:, k].mean()),
                        float(length[:, k].mean()),
                        float((est[:, k] - truth[:, k]).mean()),
                        float(truth_mean[k]),
                        len(good),
                    )
                )
            mstats.append(
                MethodStats(spec.name, n, len(good), failures, float(np.mean([o.cpu_seconds for o in good])))
            )
    return SimulationReport(config.to_dict(), cells, mstats, config.n_replicates)


def coverage_floor(alpha: float, n_replicates: int, n_se: float = 3.0) -> float:
    """Nominal coverage minus ``n_se`` Monte Carlo standard errors."""
    return 1 - alpha - n_se * math.sqrt(alpha * (1 - alpha) / n_replicates)
