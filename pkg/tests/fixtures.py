"""Frozen small evaluation folds with fixed proxy scores."""

import numpy as np

# 12 units, K=2; hand-computed GATES: (11/3, -5)
FOLD_A = dict(
    y=np.array([3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8], float),
    d=np.array([1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0]),
    scores=np.array([0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4, 0.5, 0.45, 0.05, 0.95]),
    k=2,
    hand=np.array([11 / 3, -5.0]),
)

# 10 units, K=3 (sizes 4, 3, 3), tied scores, unbalanced arms
FOLD_B = dict(
    y=np.array([0.5, -1.25, 2.0, 3.5, 0.0, 1.75, -0.5, 4.25, 2.5, -2.0]),
    d=np.array([1, 1, 0, 1, 0, 0, 1, 1, 0, 1]),
    scores=np.array([1.0, 1.0, 0.5, 2.0, 0.5, -1.0, 1.0, 3.0, 0.0, 0.5]),
    k=3,
)

# 8 units, K=4, a single treated unit
FOLD_C = dict(
    y=np.array([1.5, 2.5, -0.5, 0.25, 3.0, -1.0, 0.75, 2.0]),
    d=np.array([0, 0, 1, 0, 0, 0, 0, 0]),
    scores=np.array([0.3, -0.2, 0.9, 0.1, 0.4, -0.7, 0.8, 0.0]),
    k=4,
)

FOLDS = {"A": FOLD_A, "B": FOLD_B, "C": FOLD_C}
