import numpy as np
import pytest

from lambda_mem import EnsembleParams, build_medium


@pytest.fixture(scope="session")
def medium_small():
    """Gaussian ensemble d0=10, F=1 with a small transverse basis (fast)."""
    return build_medium(EnsembleParams(10.0, 1.0), m=0, n_max=6, R=4.0)


@pytest.fixture(scope="session")
def medium_ref():
    """d0=10, F=1 on R=4, n_max=12: the grid of the frozen reference values."""
    return build_medium(EnsembleParams(10.0, 1.0), m=0, n_max=12, R=4.0)


@pytest.fixture(scope="session")
def medium_1d():
    return build_medium(EnsembleParams(10.0, 1.0, density="uniform"), m=0, n_max=1, R=4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance PASS/FAIL lines at the end of the run."""
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.REPORT, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
