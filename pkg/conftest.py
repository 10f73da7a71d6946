import numpy as np
import pytest

from models.geometry import Arc
from models.schemas import Word
from services.catalog_service import get_catalog_service
from services.circle_service import get_circle_service
from services.hyperspace_service import get_hyperspace_service
from services.semigroup_service import get_semigroup_service
from services.skewprod_service import get_skewprod_service

BLEND_B = Arc(start=0.35, length=0.3)
BLEND_D = Arc(start=1 / 3, length=1 / 3)


@pytest.fixture(scope="session")
def circle():
    return get_circle_service()


@pytest.fixture(scope="session")
def hyperspace():
    return get_hyperspace_service()


@pytest.fixture(scope="session")
def semigroup():
    return get_semigroup_service()


@pytest.fixture(scope="session")
def skewprod():
    return get_skewprod_service()


@pytest.fixture(scope="session")
def catalog():
    return get_catalog_service()


@pytest.fixture(scope="session")
def single_rotation(catalog):
    return catalog.get("single-rotation").system


@pytest.fixture(scope="session")
def two_rotations(catalog):
    return catalog.get("two-rotations").system


@pytest.fixture(scope="session")
def morse_smale(catalog):
    return catalog.get("rotation-morse-smale").system


@pytest.fixture(scope="session")
def cantor_group(catalog):
    return catalog.get("cantor-group")


@pytest.fixture(scope="session")
def cantor_preserving(catalog):
    return catalog.get("cantor-preserving")


@pytest.fixture(scope="session")
def gap_pair(cantor_group):
    return cantor_group.related["gap-normalised"]


@pytest.fixture(scope="session")
def ms_cover(semigroup, morse_smale):
    return semigroup.search_expanding_cover(morse_smale, kappa=1.2, word_depth=8, grid_size=24)


@pytest.fixture(scope="session")
def ms_attractor(hyperspace, morse_smale):
    return hyperspace.strict_attractor_probe(morse_smale, 0.05, seeds=np.arange(8) / 8, budget_n=100,
                                             delta=1 / 512)


@pytest.fixture(scope="session")
def blend(semigroup, gap_pair):
    return semigroup.verify_blending(gap_pair, BLEND_B, BLEND_D, [Word(symbols=(1,)), Word(symbols=(2,))])
