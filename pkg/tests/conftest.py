import numpy as np
import pytest

from locavg.design import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_varying(rng, n=200, p=2, noise=0.1, coef=None):
    """Random varying-coefficient sample with ``a_j(u) = sin(2 pi u + j)``."""
    u = rng.uniform(0, 1, n)
    x = rng.standard_normal((n, p))
    if coef is None:
        a = np.column_stack([np.sin(2 * np.pi * u + j) for j in range(p)])
    else:
        a = np.broadcast_to(np.asarray(coef, dtype=float), (n, p))
    y = np.sum(a * x, axis=1) + noise * rng.standard_normal(n)
    return Dataset(u=u, x=x, y=y)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
