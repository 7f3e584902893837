import numpy as np
import pytest

from monoctrl.geometry import MovingDomain, build_nested
from monoctrl.grid import Grid
from monoctrl.weights import build_weights


@pytest.fixture(scope="session")
def dom():
    return MovingDomain.sweeping(1.0, 1.0, 0.2, 0.05)


@pytest.fixture(scope="session")
def sup(dom):
    return build_nested(dom, 0.25, 0.3)


@pytest.fixture(scope="session")
def ws(dom):
    return build_weights(dom)


@pytest.fixture(scope="session")
def g64():
    return Grid(1.0, 1.0, 64, 64)


@pytest.fixture(scope="session")
def g128():
    return Grid(1.0, 1.0, 128, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
