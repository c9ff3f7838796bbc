"""Sorted-group cutoffs and rank-based group assignment.

Group 1 holds the highest proxy scores. Cutoffs follow the empirical
quantile rule ``c_k = inf{c : #{S > c} <= m k / K}``, with sentinels
``c_0 = +inf`` and ``c_K = -inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GroupCutoffs:
    k_groups: int
    cutoffs: np.ndarray  # c_0 .. c_K, non-increasing

    @property
    def interior(self) -> np.ndarray:
        return self.cutoffs[1:-1]


@dataclass(frozen=True)
class GroupAssignment:
    k_groups: int
    group_of: np.ndarray  # values 1..K, aligned with the scores

    def indicator(self, k: int) -> np.ndarray:
        return self.group_of == k

    def sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.k_groups + 1)[1:]


def _check(scores: np.ndarray, k_groups: int) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1:
        raise ValueError("scores must be a vector")
    if k_groups < 2:
        raise ValueError("need K >= 2 groups")
    if scores.shape[0] < k_groups:
        raise ValueError(f"cannot form K={k_groups} groups from m={scores.shape[0]} scores")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return scores


def compute_cutoffs(scores: np.ndarray, k_groups: int) -> GroupCutoffs:
    scores = _check(scores, k_groups)
    m = scores.shape[0]
    desc = np.sort(scores)[::-1]
    cut = np.empty(k_groups + 1)
    cut[0], cut[-1] = np.inf, -np.inf
    for k in range(1, k_groups):
        # the infimum is attained at the (floor(mk/K)+1)-th largest score
        cut[k] = desc[(m * k) // k_groups]
    return GroupCutoffs(k_groups, cut)


def group_sizes(m: int, k_groups: int) -> np.ndarray:
    base, extra = divmod(m, k_groups)
    return base + (np.arange(k_groups) < extra).astype(np.int64)


def descending_order(scores: np.ndarray) -> np.ndarray:
    """Unit indices by score, highest first; ties go to the lower index."""
    return np.lexsort((np.arange(scores.shape[0]), -scores))


def assign_groups(scores: np.ndarray, k_groups: int) -> GroupAssignment:
    """Split units into ``k_groups`` blocks of descending score, sizes within one.

    Remainder units go one each to groups 1, 2, ... so ``m=7, K=3`` yields
    sizes ``(3, 2, 2)``.
    """
    scores = _check(scores, k_groups)
    order = descending_order(scores)
    labels = np.repeat(np.arange(1, k_groups + 1), group_sizes(scores.shape[0], k_groups))
    group_of = np.empty(scores.shape[0], dtype=np.int64)
    group_of[order] = labels
    return GroupAssignment(k_groups, group_of)


def indicators_from_cutoffs(scores: np.ndarray, cutoffs: GroupCutoffs) -> np.ndarray:
    """``f_k(s) = 1{s > c_k} - 1{s > c_(k-1)}`` for k = 1..K, shape ``(K, m)``.

    Strict inequalities pair with the ``#{S > c}`` quantile rule: with distinct
    scores and ``K | m`` each indicator selects exactly ``m/K`` units, matching
    :func:`assign_groups`.
    """
    scores = np.asarray(scores, dtype=float)
    above = scores[None, :] > cutoffs.cutoffs[:, None]
    return above[1:].astype(np.int8) - above[:-1].astype(np.int8)
