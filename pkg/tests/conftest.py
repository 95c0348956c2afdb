from __future__ import annotations

import numpy as np
import pytest

from breakbayes.model import Dataset


def make_dataset(T=40, dx=2, shift=(0,), k=None, delta=1.0, seed=0, sigma=1.0, intercept=True):
    """Random regression with a break at ``k`` in the ``shift`` columns."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((T, dx))
    if intercept:
        X[:, 0] = 1.0
    R = np.zeros((dx, len(shift)))
    for c, j in enumerate(shift):
        R[j, c] = 1.0
    k = T // 2 if k is None else k
    beta = rng.standard_normal(dx)
    post = (np.arange(1, T + 1) > k).astype(float)
    y = X @ beta + post * (X @ R @ np.full(len(shift), delta)) + sigma * rng.standard_normal(T)
    return Dataset(y, X, R)


@pytest.fixture
def ds40():
    return make_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
