import numpy as np
import pytest

from heiskern.groups import SkewForm


@pytest.fixture
def h3():
    return SkewForm.heisenberg3()


@pytest.fixture
def form42():
    """A surjective form with N = 4, d = 2 (two independent tables)."""
    t1 = np.zeros((4, 4))
    t1[0, 1], t1[1, 0] = 1.0, -1.0
    t1[2, 3], t1[3, 2] = 0.5, -0.5
    t2 = np.zeros((4, 4))
    t2[0, 2], t2[2, 0] = 1.0, -1.0
    t2[1, 3], t2[3, 1] = -0.7, 0.7
    return SkewForm([t1, t2])


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


def random_skew(rng, n):
    m = rng.standard_normal((n, n))
    return m - m.T


# pass/fail lines appended by the acceptance battery, echoed after the
# terminal summary so they stay visible under output capture
acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    return acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
