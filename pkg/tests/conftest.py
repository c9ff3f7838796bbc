import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("gates_ri", database=None, max_examples=100, deadline=None)
settings.load_profile("gates_ri")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def make_dataset(n=200, p=5, effect=None, seed=0):
    from gates_ri.data import ExperimentDataset

    gen = np.random.default_rng(seed)
    z = gen.standard_normal((n, p))
    d = np.zeros(n, dtype=int)
    d[gen.permutation(n)[: n // 2]] = 1
    tau = np.zeros(n) if effect is None else effect(z)
    y = z[:, 0] + d * tau + gen.standard_normal(n)
    return ExperimentDataset(y, d, z)


ACCEPTANCE_LOG = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_LOG.append((number, passed, detail))
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LOG):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}")
