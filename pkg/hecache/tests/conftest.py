from __future__ import annotations

import numpy as np
import pytest

from hecache.ckks import keygen
from hecache.params import SchemeParams


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run the reference-size (N=4096, full model) experiments",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240617)


@pytest.fixture(scope="session")
def params8() -> SchemeParams:
    return SchemeParams.toy(8)


@pytest.fixture(scope="session")
def params16() -> SchemeParams:
    return SchemeParams.toy(16)


@pytest.fixture(scope="session")
def params64() -> SchemeParams:
    return SchemeParams.toy(64)


@pytest.fixture(scope="session")
def reference_params() -> SchemeParams:
    return SchemeParams.reference()


@pytest.fixture(scope="session")
def keys16(params16):
    return keygen(params16, np.random.default_rng(16))


@pytest.fixture(scope="session")
def keys64(params64):
    return keygen(params64, np.random.default_rng(64))


@pytest.fixture(scope="session")
def reference_keys(reference_params):
    return keygen(reference_params, np.random.default_rng(4096))
