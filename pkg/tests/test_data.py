import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gates_ri.data import (
    CrossFit,
    DataValidationError,
    ExperimentDataset,
    MainAux,
    fold_sizes,
    load_csv,
    make_split_plan,
)


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    path = write(tmp_path, "y,d,x\n1,1,0.5\n2,0,0.1\n3,1,-1\n4,0,2\n")
    ds = load_csv(path)
    assert ds.n == 4 and ds.p == 1
    np.testing.assert_array_equal(ds.y, [1, 2, 3, 4])
    np.testing.assert_array_equal(ds.d, [1, 0, 1, 0])
    np.testing.assert_array_equal(ds.unit_ids, np.arange(4))
    assert ds.covariate_names == ("x",)


def test_load_csv_column_order_and_names(tmp_path):
    path = write(tmp_path, "b,outcome,a,treat\n1,5,2,1\n3,6,4,0\n")
    ds = load_csv(path, "outcome", "treat")
    assert ds.covariate_names == ("b", "a")
    np.testing.assert_array_equal(ds.z, [[1, 2], [3, 4]])


@pytest.mark.parametrize(
    "text, message",
    [
        ("y,d,x\n1,2,0\n2,0,1\n", "treatment not binary"),
        ("y,d,x\n1,1,0\n2,1,1\n", "single-arm dataset"),
        ("y,x\n1,0\n2,1\n", "missing column"),
        ("y,d,x\n1,1,abc\n2,0,1\n", "non-numeric"),
        ("y,d,x\n1,1,0\n", "n < 2"),
        ("y,d,x\n1,true,0\n2,0,1\n", "treatment not binary"),
        ("y,d,x\n1,1,\n2,0,1\n", "non-numeric"),
        ("y,d,x\nnan,1,0\n2,0,1\n", "non-finite"),
    ],
)
def test_load_csv_rejects(tmp_path, text, message):
    with pytest.raises(DataValidationError, match=message):
        load_csv(write(tmp_path, text))


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="input not found"):
        load_csv(tmp_path / "nope.csv")


def test_dataset_is_immutable():
    ds = ExperimentDataset([1.0, 2.0], [1, 0], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        ds.y[0] = 5.0


def test_cross_fit_plan_sizes():
    plan = make_split_plan(6, CrossFit(3), seed=11)
    assert [len(f) for f in plan.folds] == [2, 2, 2]
    np.testing.assert_array_equal(np.sort(np.concatenate(plan.folds)), np.arange(6))


def test_main_aux_plan_paper_split():
    plan = make_split_plan(100, MainAux(0.33), seed=3)
    assert len(plan.main) == 33 and len(plan.aux) == 67


def test_plan_determinism():
    assert make_split_plan(50, CrossFit(5), 9) == make_split_plan(50, CrossFit(5), 9)
    assert make_split_plan(50, MainAux(0.2), 9) == make_split_plan(50, MainAux(0.2), 9)


def test_fold_remainder_goes_first():
    assert fold_sizes(11, 3) == [4, 4, 3]
    assert fold_sizes(12, 5) == [3, 3, 2, 2, 2]


@pytest.mark.parametrize(
    "n, kind",
    [(5, CrossFit(3)), (10, CrossFit(1)), (2, MainAux(0.1)), (10, MainAux(1.0)), (10, MainAux(0.0))],
)
def test_plan_errors(n, kind):
    with pytest.raises(DataValidationError):
        make_split_plan(n, kind, 0)


def test_partition_property_many_instances():
    gen = np.random.default_rng(0)
    for _ in range(1000):
        n_folds = int(gen.integers(2, 8))
        n = int(gen.integers(2 * n_folds, 200))
        plan = make_split_plan(n, CrossFit(n_folds), int(gen.integers(0, 2**63)))
        sizes = [len(f) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1
        joined = np.concatenate(plan.folds)
        assert len(joined) == n and len(np.unique(joined)) == n


def test_different_seeds_give_different_plans():
    plans = {tuple(make_split_plan(50, CrossFit(5), s).folds[0].tolist()) for s in range(1000)}
    assert len(plans) >= 990


@given(st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_main_aux_partition(n, frac, seed):
    m = int(np.floor(n * frac + 0.5))
    if m < 1 or m > n - 1:
        with pytest.raises(DataValidationError):
            make_split_plan(n, MainAux(frac), seed)
        return
    plan = make_split_plan(n, MainAux(frac), seed)
    assert len(plan.main) == m
    np.testing.assert_array_equal(np.sort(np.concatenate(plan.folds)), np.arange(n))
