from __future__ import annotations

import numpy as np
import pytest

from mtlspca.layout import ProblemLayout
from mtlspca.stats import GramEstimate

TRANSFER_COUNTS = [(1000, 1000), (50, 50)]


def transfer_layout() -> ProblemLayout:
    return ProblemLayout.from_counts(100, TRANSFER_COUNTS)


def transfer_gram(beta: float) -> GramEstimate:
    """True Gram of the two-task model, class j of task t centred at (-1)^j mu_t."""
    mu1 = np.array([1.0, 0.0])
    mu2 = np.array([beta, np.sqrt(1 - beta * beta)])
    m = np.column_stack([-mu1, mu1, -mu2, mu2])
    return GramEstimate(m.T @ m)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def random_dataset(rng: np.random.Generator, k: int, p: int, n_range=(4, 60), scale: float = 1.0):
    """Random task matrices (samples as columns) with random class means."""
    tasks = {}
    for t in range(1, k + 1):
        n1, n2 = rng.integers(*n_range, size=2)
        m1, m2 = scale * rng.standard_normal(p) / np.sqrt(p) * 3, scale * rng.standard_normal(p) / np.sqrt(p) * 3
        tasks[t] = (rng.standard_normal((p, n1)) + m1[:, None], rng.standard_normal((p, n2)) + m2[:, None])
    return tasks


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
