import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tcband.analysis import reference_params, stress_params
from tcband.model import derive_constants


@pytest.fixture(scope="session")
def ref():
    return reference_params(1e-3)


@pytest.fixture(scope="session")
def ref_consts(ref):
    return derive_constants(ref)


@pytest.fixture(scope="session")
def stress():
    return stress_params(1e-3)


@pytest.fixture(scope="session")
def stress_consts(stress):
    return derive_constants(stress)
