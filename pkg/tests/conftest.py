import numpy as np
import pytest

from elephant_abm.environment import SyntheticLandscapeSpec, generate_synthetic_landscape
from elephant_abm.engine import LandscapeConfig, RunConfig, build_world


SMALL_SPEC = SyntheticLandscapeSpec(nrows=60, ncols=60, ridge_halfwidth=4, ridge_pass_rows=8)


@pytest.fixture(scope="session")
def small_landscape():
    stack, gardens = generate_synthetic_landscape(SMALL_SPEC, 0)
    return stack


@pytest.fixture(scope="session")
def small_config():
    return RunConfig(landscape=LandscapeConfig(synthetic=SMALL_SPEC), month=1, days=2, replicates=3)


@pytest.fixture(scope="session")
def small_world(small_config):
    return build_world(small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
