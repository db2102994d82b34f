import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nhshift.measure import DiscreteMeasure

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def scattered_measure(rng, d, N, n, m=1.0):
    """n atoms at random points of [1/4, 3/4]^d; several may share a finest cell."""
    lo = 1 << (N - 2)
    cells = rng.integers(lo, 3 * lo, size=(n, d))
    pts = (cells + rng.uniform(0.05, 0.95, size=(n, d))) / (1 << N)
    return DiscreteMeasure(pts, rng.uniform(0.2, 1.0, n), m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """record(key, passed, detail) stores one line for the end-of-run summary."""

    def record(key, passed, detail):
        ACCEPTANCE[key] = (bool(passed), detail)
        print(f"criterion {key}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def _order(key):
    head, _, tail = str(key).partition(".")
    return (int(head) if head.isdigit() else 99, tail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=_order):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
