import json
from importlib import resources

import pytest

import dilocsim as d


def _bundled(name: str) -> dict:
    return json.loads(resources.files("dilocsim").joinpath("data", name).read_text())


@pytest.fixture(scope="session")
def example1():
    return d.scenario_from_dict(_bundled("example1.json"))


@pytest.fixture(scope="session")
def example1_matrices(example1):
    return d.build_system_matrices(example1)


@pytest.fixture(scope="session")
def strategy1():
    return d.schedule_from_dict(_bundled("strategy1.json"))


@pytest.fixture(scope="session")
def strategy2():
    return d.schedule_from_dict(_bundled("strategy2.json"))
