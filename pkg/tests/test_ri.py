import json

import numpy as np
import pytest

from conftest import make_dataset
from fixtures import FOLD_A, FOLDS
from gates_ri.data import ExperimentDataset
from gates_ri.grouping import assign_groups
from gates_ri.learners import Fixed, LassoLearner
from gates_ri.ri import (
    EstimationError,
    GatesResult,
    clan,
    contrast_from_splits,
    cross_fit_gates,
    estimate_gates_split,
    heterogeneity_contrast,
    nadeau_bengio,
    normal_quantile,
    variance_nadeau_bengio,
)
from gates_ri.sim import Dgp, generate
from oracles import gates_by_summation


@pytest.mark.parametrize("name", sorted(FOLDS))
def test_split_estimate_matches_summation(name):
    f = FOLDS[name]
    est = estimate_gates_split(f["y"], f["d"], f["scores"], f["k"])
    groups = assign_groups(f["scores"], f["k"]).group_of
    np.testing.assert_allclose(est.gamma_hat, gates_by_summation(f["y"], f["d"], groups, f["k"]), rtol=1e-14, atol=1e-14)


def test_split_estimate_hand_value():
    est = estimate_gates_split(FOLD_A["y"], FOLD_A["d"], FOLD_A["scores"], 2)
    np.testing.assert_allclose(est.gamma_hat, FOLD_A["hand"], rtol=1e-15)
    assert (est.n_treated, est.n_control) == (6, 6)
    np.testing.assert_array_equal(est.group_counts, [[5, 1], [1, 5]])


def test_neyman_variance_is_arm_mean_difference_variance():
    f = FOLDS["B"]
    est = estimate_gates_split(f["y"], f["d"], f["scores"], 3)
    g = assign_groups(f["scores"], 3).group_of
    t = f["d"] == 1
    for k in range(3):
        w = 3 * f["y"] * (g == k + 1)
        expected = w[t].var(ddof=1) / t.sum() + w[~t].var(ddof=1) / (~t).sum()
        assert est.neyman_var[k] == pytest.approx(expected, rel=1e-13)


def test_single_unit_arm_uses_pooled_variance():
    f = FOLDS["C"]
    est = estimate_gates_split(f["y"], f["d"], f["scores"], 4)
    g = assign_groups(f["scores"], 4).group_of
    t = f["d"] == 1
    w = 4 * f["y"][:, None] * (g[:, None] == np.arange(1, 5))
    expected = w.var(axis=0, ddof=1) / 1 + w[~t].var(axis=0, ddof=1) / 7
    np.testing.assert_allclose(est.neyman_var, expected, rtol=1e-13)


def test_constant_outcome():
    y = np.full(12, 2.5)
    est = estimate_gates_split(y, FOLD_A["d"], FOLD_A["scores"], 2)
    n1k, n0k = est.group_counts[:, 0], est.group_counts[:, 1]
    np.testing.assert_allclose(est.gamma_hat, 2 * 2.5 * (n1k / 6 - n0k / 6), rtol=1e-14)


def test_label_flip_negates_with_equal_arms():
    a = estimate_gates_split(FOLD_A["y"], FOLD_A["d"], FOLD_A["scores"], 2)
    b = estimate_gates_split(FOLD_A["y"], 1 - FOLD_A["d"], FOLD_A["scores"], 2)
    np.testing.assert_allclose(b.gamma_hat, -a.gamma_hat, rtol=1e-15)


def test_empty_arm_rejected():
    with pytest.raises(EstimationError):
        estimate_gates_split(np.arange(4.0), np.ones(4, int), np.arange(4.0), 2)


@pytest.mark.parametrize(
    "vbar, v2, n_splits, expected",
    [(1.0, 0.0, 4, 1.0), (1.0, 1.0, 4, 0.25), (1.0, 2.0, 4, 0.25)],
)
def test_nadeau_bengio_arithmetic(vbar, v2, n_splits, expected):
    # estimates with sample variance v2 and mean-zero deviations
    dev = np.zeros(n_splits)
    if v2 > 0:
        dev[0], dev[1] = 1.0, -1.0
        dev *= np.sqrt(v2 * (n_splits - 1) / 2)
    est = (5.0 + dev)[:, None]
    _, var, across = nadeau_bengio(est, np.full((n_splits, 1), vbar))
    assert across[0] == pytest.approx(v2)
    assert var[0] == pytest.approx(expected, rel=1e-14)


def test_nadeau_bengio_raw_value_when_floor_inactive():
    est = np.array([[0.0], [0.2], [0.4]])
    _, var, across = nadeau_bengio(est, np.full((3, 1), 1.0))
    assert var[0] == pytest.approx(1.0 - 2 / 3 * 0.04)


def test_contrast_arithmetic():
    c = contrast_from_splits(np.array([1.0, 3.0]), np.array([0.5, 0.5]))
    assert c.estimate == 2.0
    assert c.across_split_var == 2.0
    assert c.variance == 0.25


def test_contrast_degenerate_is_zero():
    ds = make_dataset(120, 3, seed=5)
    res = cross_fit_gates(ds, 3, 2, seed=1)
    for s in res.per_split:
        s.gamma_hat[1] = s.gamma_hat[0]
    assert heterogeneity_contrast(res).estimate == 0.0


def test_contrast_variance_is_difference_neyman_variance():
    ds = make_dataset(150, 3, seed=6)
    res = cross_fit_gates(ds, 3, 3, seed=2)
    c = heterogeneity_contrast(res)
    for s, v in zip(res.per_split, c.per_split_variances):
        cov = s.neyman_cov
        assert v == pytest.approx(cov[2, 2] + cov[0, 0] - 2 * cov[0, 2])
    assert c.first == 3 and c.second == 1


@pytest.fixture(scope="module")
def linear_data():
    data, _ = generate(Dgp("linear"), 300, seed=42)
    return data


@pytest.fixture(scope="module")
def linear_result(linear_data):
    return cross_fit_gates(linear_data, 3, 5, seed=7)


def test_aggregate_is_split_mean(linear_result):
    per = np.array([s.gamma_hat for s in linear_result.per_split])
    assert np.array_equal(linear_result.gamma_hat, per.mean(axis=0))


def test_variance_floor_and_ci(linear_result):
    vbar = np.mean([s.neyman_var for s in linear_result.per_split], axis=0)
    assert np.all(linear_result.variance >= vbar / 3)
    np.testing.assert_array_equal(linear_result.variance, variance_nadeau_bengio(linear_result.per_split, 3))
    half = normal_quantile(0.975) * np.sqrt(linear_result.variance)
    np.testing.assert_allclose(linear_result.ci_upper - linear_result.gamma_hat, half)
    assert np.all(linear_result.ci_lower <= linear_result.gamma_hat)


@pytest.mark.parametrize("n_splits, eval_share", [(3, 1 / 3), (5, 1 / 5)])
def test_train_eval_shares(linear_data, n_splits, eval_share):
    res = cross_fit_gates(linear_data, n_splits, 5, seed=3)
    for s in res.per_split:
        assert s.n_treated + s.n_control == pytest.approx(linear_data.n * eval_share, abs=1)


def test_seed_determinism(linear_data, linear_result):
    again = cross_fit_gates(linear_data, 3, 5, seed=7)
    assert again.to_json() == linear_result.to_json()
    other = cross_fit_gates(linear_data, 3, 5, seed=8)
    assert other.to_json() != linear_result.to_json()


def test_json_round_trip(linear_result):
    back = GatesResult.from_dict(json.loads(linear_result.to_json()))
    assert back.to_json() == linear_result.to_json()


def test_clan_identity(linear_data, linear_result):
    res = clan(linear_data, lambda y, z: y, 3, 5, seed=7)
    np.testing.assert_array_equal(res.gamma_hat, linear_result.gamma_hat)
    np.testing.assert_array_equal(res.ci_lower, linear_result.ci_lower)


def test_clan_scaling(linear_data, linear_result):
    res = clan(linear_data, lambda y, z: 2 * y, 3, 5, seed=7)
    np.testing.assert_array_equal(res.gamma_hat, 2 * linear_result.gamma_hat)
    np.testing.assert_array_equal(res.ci_lower, 2 * linear_result.ci_lower)
    np.testing.assert_array_equal(res.ci_upper, 2 * linear_result.ci_upper)


def test_outcome_affine_identity(linear_data, linear_result):
    a, b = -1.5, 4.0
    res = clan(linear_data, lambda y, z: a * y + b, 3, 5, seed=7)
    for s0, s1 in zip(linear_result.per_split, res.per_split):
        n1k, n0k = s0.group_counts[:, 0], s0.group_counts[:, 1]
        shift = b * 5 * (n1k / s0.n_treated - n0k / s0.n_control)
        np.testing.assert_allclose(s1.gamma_hat, a * s0.gamma_hat + shift, rtol=1e-12, atol=1e-12)


def test_clan_covariate_balance():
    data, _ = generate(Dgp("linear"), 4000, seed=9)
    res = clan(data, lambda y, z: z[:, 2], 3, 5, seed=1)
    assert np.all(np.abs(res.gamma_hat) < 4 * np.sqrt(res.variance))


def test_degenerate_folds_error():
    d = np.zeros(12, int)
    d[0] = 1
    ds = ExperimentDataset(np.arange(12.0), d, np.arange(12.0)[:, None])
    with pytest.raises(EstimationError):
        cross_fit_gates(ds, 3, 2)


def test_learner_failure_is_estimation_error(linear_data):
    class Broken:
        learner_id = "broken"

        def fit_proxy(self, train, seed=0):
            raise RuntimeError("boom")

    with pytest.raises(EstimationError, match="boom"):
        cross_fit_gates(linear_data, 3, 5, Broken())


def test_fixed_lambda_learner(linear_data):
    res = cross_fit_gates(linear_data, 3, 5, LassoLearner(Fixed(0.1)), seed=1)
    assert res.learner_id.startswith("lasso-tlearner(lambda=0.1")


def coverage_run(kind, n_reps, n=500, n_splits=5, k=5, seed=0):
    """Fraction of replicates whose GATES CIs and group-5-vs-1 contrast CI cover the truth."""
    dgp = Dgp(kind)
    truth = 1.0 if kind == "constant" else 0.0
    cov = np.zeros(k)
    contrast_cov = 0
    for r in range(n_reps):
        data, _ = generate(dgp, n, seed=seed * 100_000 + r)
        res = cross_fit_gates(data, n_splits, k, seed=r)
        cov += (res.ci_lower <= truth) & (truth <= res.ci_upper)
        c = heterogeneity_contrast(res)
        contrast_cov += c.ci_lower <= 0 <= c.ci_upper
    return cov / n_reps, contrast_cov / n_reps


@pytest.mark.slow
def test_zero_effect_coverage():
    cov, contrast = coverage_run("zero", 500, n_splits=3, seed=1)
    print("zero-effect coverage", cov, contrast)
    assert np.all(cov >= 0.93)


@pytest.mark.slow
def test_homogeneous_effect_contrast_coverage():
    cov, contrast = coverage_run("constant", 500, n_splits=3, seed=2)
    print("constant-effect coverage", cov, "contrast", contrast)
    assert contrast >= 0.93
