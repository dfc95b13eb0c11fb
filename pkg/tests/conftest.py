import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qcshape.shapes import disk_mesh, grid_patch

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def flat_disk():
    return disk_mesh(12)


@pytest.fixture(scope="session")
def bumpy_disk():
    return disk_mesh(14, height=lambda x, y: 0.3 * np.exp(-4 * (x * x + y * y)))


@pytest.fixture(scope="session")
def grid():
    return grid_patch(9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
