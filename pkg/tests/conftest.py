import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def random_spd(n, rng, dominance=1.0):
    A = rng.uniform(-1.0, 1.0, (n, n))
    A = (A + A.T) / 2
    A[np.diag_indices(n)] = np.abs(A).sum(axis=1) + dominance
    return A


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
