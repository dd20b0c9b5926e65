import numpy as np
import pytest


def random_pd(rng, d, floor=0.1):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + floor * np.eye(d)


def random_sym(rng, d):
    A = rng.standard_normal((d, d))
    return (A + A.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines, which passing tests would otherwise swallow."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
