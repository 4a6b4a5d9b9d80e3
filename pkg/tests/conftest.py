import numpy as np
import pytest

from logsoblab import Gaussian, UniformCube, draw


@pytest.fixture(scope="session")
def gauss4_cloud():
    return draw(Gaussian.standard(4), 20_000, seed=11)


@pytest.fixture(scope="session")
def cube3_cloud():
    return draw(UniformCube(np.sqrt(3.0), 3), 20_000, seed=12)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
