import numpy as np
import pytest

from arbpg.problem import BlockPartition, CompositeProblem, HalfSquaredNorm
from arbpg.prox import NonnegIndicator, ZeroRegularizer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_problem(regularizer=None, smooth_cls=HalfSquaredNorm, sizes=(1,)):
    part = BlockPartition(list(sizes))
    return CompositeProblem(part, smooth_cls(part), regularizer or NonnegIndicator())


@pytest.fixture
def half_sq_nonneg():
    return scalar_problem(NonnegIndicator())


@pytest.fixture
def half_sq_free():
    return scalar_problem(ZeroRegularizer())


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
                            + (f"  ({detail})" if detail else ""))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
