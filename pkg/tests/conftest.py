import numpy as np
import pytest

from metriccalc import space as sp


@pytest.fixture(scope="session")
def line65():
    return sp.grid(1, 65)


@pytest.fixture(scope="session")
def sq16():
    return sp.grid(2, 16)


@pytest.fixture(scope="session")
def sq64():
    return sp.grid(2, 64)


@pytest.fixture(scope="session")
def cantor():
    return sp.standard_cantor(5)


@pytest.fixture(scope="session")
def flake():
    return sp.snowflake(sp.grid(1, 40), 0.5)


def smooth_corpus(space, rng):
    """Coordinate polynomials, trig fields and random linear combinations."""
    X = space.coords
    x = X[:, 0]
    y = X[:, 1] if X.shape[1] > 1 else np.zeros_like(x)
    base = [x, y, x * x, x * y, np.sin(3 * x) + y**2, np.cos(2 * y) * x, np.abs(x - 0.5),
            np.exp(-((x - 0.3) ** 2 + (y - 0.6) ** 2))]
    extra = [rng.normal() * x + rng.normal() * y + rng.normal() for _ in range(4)]
    return [sp.ScalarField(v, space) for v in base + extra]


ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
