import json
import pathlib

import numpy as np
import pytest

from spatial_tsr.io import read_dataset_csv

DATA = pathlib.Path(__file__).parent / "data"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def n6():
    return read_dataset_csv(DATA / "n6.csv")


@pytest.fixture(scope="session")
def n10():
    return read_dataset_csv(DATA / "n10.csv")


@pytest.fixture(scope="session")
def n10_trend():
    return read_dataset_csv(DATA / "n10_trend.csv")


@pytest.fixture(scope="session")
def oracle():
    with open(DATA / "oracle_values.json") as fh:
        return json.load(fh)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
