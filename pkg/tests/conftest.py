import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from hankelmor.lti import (PlantConfig, build_plant, random_stable_system,
                           s2_system, scalar_system)

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def scalar():
    return scalar_system()


@pytest.fixture(scope="session")
def s2():
    return s2_system()


@pytest.fixture(scope="session")
def plant():
    return build_plant(PlantConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mimo():
    return random_stable_system(12, 2, 3, 0.85, seed=7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
