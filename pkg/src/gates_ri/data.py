"""Experiment data containers, CSV ingestion and seeded split planning."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class DataValidationError(ValueError):
    """Raised when input data violates a dataset or split invariant."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ExperimentDataset:
    """Outcomes ``y``, binary treatment ``d`` and covariates ``z`` of a randomized experiment.

    Arrays are copied and made read-only on construction, so a dataset can be
    shared freely between workers.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    unit_ids: np.ndarray = None  # type: ignore[assignment]
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        d_raw = np.asarray(self.d)
        z = np.asarray(self.z, dtype=float)
        if y.ndim != 1:
            raise DataValidationError("outcome must be a vector")
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        n = y.shape[0]
        if n < 2:
            raise DataValidationError("n < 2: need at least two units")
        if d_raw.shape != (n,) or z.shape[0] != n:
            raise DataValidationError("row counts of y, d and z differ")
        if not np.all((d_raw == 0) | (d_raw == 1)):
            raise DataValidationError("treatment not binary")
        d = d_raw.astype(np.int8)
        if d.sum() == 0 or d.sum() == n:
            raise DataValidationError("single-arm dataset")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise DataValidationError("non-finite value in outcome or covariates")
        ids = np.arange(n) if self.unit_ids is None else np.asarray(self.unit_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise DataValidationError("unit_ids length differs from n")
        names = tuple(self.covariate_names) or tuple(f"z{j + 1}" for j in range(z.shape[1]))
        if len(names) != z.shape[1]:
            raise DataValidationError("covariate_names length differs from p")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "unit_ids", _frozen(ids))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def subset(self, index: np.ndarray) -> "ExperimentDataset":
        """Rows ``index`` as a new dataset (unit ids are carried over)."""
        index = np.asarray(index, dtype=np.int64)
        return ExperimentDataset(
            self.y[index], self.d[index], self.z[index], self.unit_ids[index], self.covariate_names
        )

    def with_outcome(self, y: np.ndarray) -> "ExperimentDataset":
        return ExperimentDataset(y, self.d, self.z, self.unit_ids, self.covariate_names)


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataValidationError(f"non-numeric cell {cell!r} in column {col!r}, row {row}") from None
    if not math.isfinite(value):
        raise DataValidationError(f"non-finite cell {cell!r} in column {col!r}, row {row}")
    return value


def load_csv(
    path: Union[str, Path], outcome_col: str = "y", treatment_col: str = "d"
) -> ExperimentDataset:
    """Read a CSV file with a header row into an :class:`ExperimentDataset`.

    Every column other than the outcome and treatment becomes a covariate, in
    file order. The treatment column must hold the literal values ``0``/``1``.
    Missing cells are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError("empty CSV file") from None
        rows = [r for r in reader if r]
    for col in (outcome_col, treatment_col):
        if col not in header:
            raise DataValidationError(f"missing column {col!r}")
    iy, idd = header.index(outcome_col), header.index(treatment_col)
    cov_idx = [j for j in range(len(header)) if j not in (iy, idd)]
    y, d, z = [], [], []
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataValidationError(f"row {r} has {len(row)} cells, header has {len(header)}")
        t = row[idd].strip()
        if t not in ("0", "1"):
            raise DataValidationError(f"treatment not binary: {t!r} at row {r}")
        d.append(int(t))
        y.append(_parse_float(row[iy].strip(), r, outcome_col))
        z.append([_parse_float(row[j].strip(), r, header[j]) for j in cov_idx])
    if len(y) < 2:
        raise DataValidationError("n < 2: need at least two units")
    z_arr = np.asarray(z, dtype=float).reshape(len(y), len(cov_idx))
    return ExperimentDataset(
        np.asarray(y), np.asarray(d), z_arr, covariate_names=tuple(header[j] for j in cov_idx)
    )


@dataclass(frozen=True)
class CrossFit:
    """Partition into ``n_folds`` folds of (near) equal size."""

    n_folds: int


@dataclass(frozen=True)
class MainAux:
    """Main/auxiliary bipartition; the main fold holds ``round(n * main_fraction)`` units."""

    main_fraction: float


SplitKind = Union[CrossFit, MainAux]


@dataclass(frozen=True, eq=False)
class SplitPlan:
    kind: SplitKind
    folds: tuple[np.ndarray, ...]
    seed: int = field(default=0)

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def complement(self, fold: int) -> np.ndarray:
        """Indices of every fold except ``fold``, sorted."""
        rest = [f for i, f in enumerate(self.folds) if i != fold]
        return np.sort(np.concatenate(rest))

    @property
    def main(self) -> np.ndarray:
        if not isinstance(self.kind, MainAux):
            raise AttributeError("main fold only exists for MainAux plans")
        return self.folds[0]

    @property
    def aux(self) -> np.ndarray:
        if not isinstance(self.kind, MainAux):
            raise AttributeError("aux fold only exists for MainAux plans")
        return self.folds[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return (
            self.kind == other.kind
            and len(self.folds) == len(other.folds)
            and all(np.array_equal(a, b) for a, b in zip(self.folds, other.folds))
        )

    __hash__ = None  # type: ignore[assignment]


def fold_sizes(n: int, n_folds: int) -> list[int]:
    """Sizes of ``n_folds`` folds; the first ``n % n_folds`` folds get one extra unit."""
    base, extra = divmod(n, n_folds)
    return [base + (1 if i < extra else 0) for i in range(n_folds)]


def main_size(n: int, main_fraction: float) -> int:
    # round half up, not Python's banker's rounding
    return int(math.floor(n * main_fraction + 0.5))


def make_split_plan(n: int, kind: SplitKind, seed: int) -> SplitPlan:
    """Uniformly random partition of ``range(n)`` determined entirely by ``seed``."""
    if isinstance(kind, CrossFit):
        if kind.n_folds < 2:
            raise DataValidationError("cross-fitting needs L >= 2 folds")
        if n < 2 * kind.n_folds:
            raise DataValidationError(f"n={n} too small for L={kind.n_folds} folds (need n >= 2L)")
        sizes = fold_sizes(n, kind.n_folds)
    elif isinstance(kind, MainAux):
        if not 0.0 < kind.main_fraction < 1.0:
            raise DataValidationError("main_fraction must lie in (0, 1)")
        m = main_size(n, kind.main_fraction)
        if m < 1 or m > n - 1:
            raise DataValidationError("main/aux split would leave a fold empty")
        sizes = [m, n - m]
    else:
        raise TypeError(f"unknown split kind {kind!r}")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    folds = tuple(_frozen(np.sort(perm[a:b])) for a, b in zip(bounds[:-1], bounds[1:]))
    return SplitPlan(kind, folds, int(seed))


def arm_counts(d: np.ndarray, index: Sequence[int]) -> tuple[int, int]:
    """(treated, control) counts among ``index``."""
    sub = d[np.asarray(index, dtype=np.int64)]
    t = int(sub.sum())
    return t, len(sub) - t
