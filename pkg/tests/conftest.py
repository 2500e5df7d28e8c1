import numpy as np
import pytest
from hypothesis import settings

from switchtrack.sem import StatePair, scale_to_radius

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_pair(rng, n, density=0.4, radius=0.5, b_lo=0.5, b_hi=1.5, state_id=1):
    a = np.where(rng.random((n, n)) < density, rng.uniform(-1, 1, (n, n)), 0.0)
    np.fill_diagonal(a, 0.0)
    a = scale_to_radius(a, radius)
    return StatePair(a, rng.uniform(b_lo, b_hi, n), state_id)


def noise_free_y(pair, X):
    return np.linalg.solve(np.eye(pair.n) - pair.a, pair.b[:, None] * X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def emit(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
