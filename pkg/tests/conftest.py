import pytest

from branchlab.offspring import OffspringLaw
from branchlab.series import SeriesEngine


# The three bundled laws. Engines are session-scoped on purpose: the
# iterated-GF cache is append-only, so sharing it across tests is safe and
# saves the repeated composition work at n = 400.

@pytest.fixture(scope="session")
def sub_law():
    return OffspringLaw([0.5, 0.25, 0.25], name="sub")


@pytest.fixture(scope="session")
def critical_law():
    return OffspringLaw([0.25, 0.5, 0.25], name="critical")


@pytest.fixture(scope="session")
def super_law():
    return OffspringLaw([0.25, 0.25, 0.5], name="super")


@pytest.fixture(scope="session")
def sub_engine(sub_law):
    return SeriesEngine(sub_law, order=256)


@pytest.fixture(scope="session")
def critical_engine(critical_law):
    return SeriesEngine(critical_law, order=256)


@pytest.fixture(scope="session")
def super_engine(super_law):
    return SeriesEngine(super_law, order=256)
