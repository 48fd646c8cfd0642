import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def normal_data(rng):
    return rng.normal(1.0, 1.0, size=25)


@pytest.fixture
def ridge_data(rng):
    from priorlens.conjugate.ridge import generate_ridge_data

    return generate_ridge_data(np.ones(5), np.ones(5), 0.1, 60, rng)
