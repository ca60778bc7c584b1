import numpy as np
import pytest

from eseem.crystals import default_crystal, default_defect


@pytest.fixture(scope="session")
def si_crystal():
    return default_crystal("si")


@pytest.fixture(scope="session")
def cawo4_crystal():
    return default_crystal("cawo4")


@pytest.fixture(scope="session")
def bi_defect():
    return default_defect("bi_si")


@pytest.fixture(scope="session")
def er_defect():
    return default_defect("er_cawo4")


@pytest.fixture(scope="session")
def er167_defect():
    return default_defect("er167_cawo4")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
