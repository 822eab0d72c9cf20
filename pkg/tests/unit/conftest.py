###############################################################################
### Imports
###############################################################################
import numpy as np
import pytest

from twistlab.complete_intersections import family_catalog


###############################################################################
### Fixtures
###############################################################################
@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def k3_system():
    return family_catalog("Xd", {"d": 4, "n": 3})


@pytest.fixture(scope="session")
def quadric_system():
    return family_catalog("Xd", {"d": 2, "n": 3})
