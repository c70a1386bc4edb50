"""
Shared fixtures: the packaged aircraft fixture, weight table, default grid
and, for slow tests, the tuned controllers of the packaged weights
"""

import pytest

from ftcbench.core.linsys import default_grid
from ftcbench.core.parser import DATA_DIR, load_fixture
from ftcbench.modules.scheduler import GainSchedule, shif_gains
from ftcbench.modules.simulator import ControllerSet
from ftcbench.modules.synthesis import load_weights, lqr_baseline, synthesize_all


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def fixture_pair():
    return load_fixture()


@pytest.fixture(scope="session")
def aircraft(fixture_pair):
    return fixture_pair[0]


@pytest.fixture(scope="session")
def aero(fixture_pair):
    return fixture_pair[1]


@pytest.fixture(scope="session")
def weights():
    return load_weights(DATA_DIR / "weights.json")


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def synthesized(aircraft, aero, weights, grid):
    return synthesize_all(aircraft, aero, weights, grid)


@pytest.fixture(scope="session")
def tuned_controllers(aircraft, weights, synthesized):
    return ControllerSet(
        scheduled=GainSchedule.from_results(synthesized),
        constant=shif_gains(synthesized, 4),
        lqr=lqr_baseline(aircraft, weights),
        altitude_bandwidth=weights.altitude_bandwidth,
    )
