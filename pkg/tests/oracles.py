"""Independent reference computations used to check the estimators."""

import numpy as np


def gates_by_summation(y, d, group_of, k_groups):
    """Fold GATES by the literal double sum, one group at a time, in plain Python."""
    n1 = sum(1 for di in d if di == 1)
    n0 = len(d) - n1
    out = []
    for k in range(1, k_groups + 1):
        treated = 0.0
        control = 0.0
        for yi, di, gi in zip(y, d, group_of):
            f = 1.0 if gi == k else 0.0
            treated += yi * di * f
            control += yi * (1 - di) * f
        out.append(k_groups / n1 * treated - k_groups / n0 * control)
    return np.array(out)


def cutoff_by_scan(scores, k_groups):
    """c_k = inf{c : #{S > c} <= m k / K}, scanning every candidate threshold."""
    scores = list(map(float, scores))
    m = len(scores)
    candidates = sorted(set(scores))
    cuts = []
    for k in range(1, k_groups):
        bound = m * k / k_groups
        ok = [c for c in candidates if sum(s > c for s in scores) <= bound]
        c = min(ok)
        # anything just below c must violate the bound, so c is the infimum
        eps = 1e-9 * max(1.0, abs(c))
        assert sum(s > c - eps for s in scores) > bound
        cuts.append(c)
    return np.array(cuts)


def ols(x, y):
    design = np.column_stack([np.ones(len(y)), x])
    return np.linalg.solve(design.T @ design, design.T @ y)
