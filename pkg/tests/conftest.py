import numpy as np
import pytest

from csmio import systems


@pytest.fixture(scope="session")
def lorenz_short():
    """Lorenz 3 over t in [0, 10] at dt = 0.01 (1001 rows)."""
    return systems.integrate_ode(systems.lorenz3(), np.array([-8.0, 8.0, 27.0]), 0.01, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = {}


@pytest.fixture
def verdict():
    """Record and print one ``CRITERION n: PASS/FAIL`` line, then assert it."""

    def record(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
        VERDICTS[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
