import pytest

from avnet.config import ScenarioConfig
from avnet.scenario import generate_case_study


@pytest.fixture(scope="session")
def config():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def road_012(config):
    return generate_case_study(0.12, 1, config)
