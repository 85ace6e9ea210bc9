import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# numba compiles on first use, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("stress", deadline=None, max_examples=1500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_corpus(seed=20240611, count=100, lo=5, hi=200):
    """Symmetric tridiagonal matrices with entries uniform in [-1, 1]."""
    from tbdos.spectral_core import SymTriMatrix

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(lo, hi + 1))
        out.append(SymTriMatrix(rng.uniform(-1, 1, n), rng.uniform(-1, 1, n - 1)))
    return out


@pytest.fixture(scope="session")
def corpus():
    return random_corpus()


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
