import numpy as np
import pytest

from alefsi.mesh import Geometry, generate_mesh, square_mesh


@pytest.fixture(scope="session")
def unit_geometry():
    return Geometry()


@pytest.fixture(scope="session")
def disk_mesh(unit_geometry):
    return generate_mesh(unit_geometry)


@pytest.fixture(scope="session")
def coarse_disk_mesh():
    return generate_mesh(Geometry(target_h=0.12))


@pytest.fixture(scope="session")
def square8():
    return square_mesh(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def _report(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
