from __future__ import annotations

import numpy as np
import pytest

from treelab import reference_graph
from treelab.resolvent import bottom_table, solve_weyl


@pytest.fixture(scope="session")
def unit():
    return reference_graph("theta_unit")


@pytest.fixture(scope="session")
def dio():
    return reference_graph("theta_dio")


@pytest.fixture(scope="session")
def unit_bottom(unit):
    return bottom_table(unit)


@pytest.fixture(scope="session")
def dio_bottom(dio):
    return bottom_table(dio)


@pytest.fixture(scope="session")
def dio_tables(dio, dio_bottom):
    """Weyl tables on theta_dio at lambda = 0, lambda0/2 and lambda0."""
    lam0 = dio_bottom.lam
    return [solve_weyl(dio, 0.0), solve_weyl(dio, lam0 / 2), dio_bottom]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
