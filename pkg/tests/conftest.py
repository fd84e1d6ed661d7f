import numpy as np
import pytest

from msdpg.coefficient import ConstantField, PeriodicField
from msdpg.mesh import build_coarse_fine_map, build_structured_mesh
from msdpg.msbasis import build_basis


@pytest.fixture(scope="session")
def small_cf():
    """Coarse 4 / fine 32 on the unit square."""
    return build_coarse_fine_map(build_structured_mesh("unit-square", 4), build_structured_mesh("unit-square", 32))


@pytest.fixture(scope="session")
def periodic_small():
    return PeriodicField(eps=0.25)


@pytest.fixture(scope="session")
def periodic_basis(small_cf, periodic_small):
    return build_basis(small_cf, periodic_small)


@pytest.fixture(scope="session")
def classical_basis(small_cf, periodic_small):
    return build_basis(small_cf, periodic_small, "classical")


@pytest.fixture(scope="session")
def constant_basis(small_cf):
    return build_basis(small_cf, ConstantField(value=1.0))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
