import pytest

from degenbill.normalform import estimate_boundary_jets
from degenbill.presets import (
    make_concave_quartic,
    make_disk,
    make_flat_cylinder,
    make_separable_square,
)


@pytest.fixture(scope="session")
def disk():
    d = make_disk()
    d.collar()
    return d


@pytest.fixture(scope="session")
def cylinder():
    d = make_flat_cylinder()
    d.collar()
    return d


@pytest.fixture(scope="session")
def square():
    d = make_separable_square()
    d.collar()
    return d


@pytest.fixture(scope="session")
def quartic():
    d = make_concave_quartic()
    d.collar()
    return d


@pytest.fixture(scope="session")
def disk_nf(disk):
    return estimate_boundary_jets(disk, m_q=192, seed=0)


@pytest.fixture(scope="session")
def cylinder_nf(cylinder):
    return estimate_boundary_jets(cylinder, m_q=96, seed=0)


@pytest.fixture(scope="session")
def quartic_nf(quartic):
    return estimate_boundary_jets(quartic, m_q=192, seed=0)
