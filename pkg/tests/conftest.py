import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mnl_bandit.model import ContextSlate

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance; echoed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def random_slate(rng, N, d, t=1, revenues=None, scale=1.0):
    x = rng.standard_normal((N, d))
    x /= np.maximum(1.0, np.linalg.norm(x, axis=1, keepdims=True))
    r = np.ones(N) if revenues is None else revenues
    return ContextSlate(t, scale * x, r)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
