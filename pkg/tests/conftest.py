import json
import os

import numpy as np
import pytest

ORACLE_PATH = os.path.join(os.path.dirname(__file__), "oracles",
                           "curvature_oracle.json")


@pytest.fixture(scope="session")
def curvature_oracle():
    with open(ORACLE_PATH) as fh:
        return json.load(fh)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
