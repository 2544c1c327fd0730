import pytest

from porosplit import cases
from porosplit.grid import build_grid
from porosplit.materials import MaterialRegion


@pytest.fixture
def bm_rock():
    return MaterialRegion(young_modulus=1.0e4, poisson_ratio=0.2, biot_coefficient=1.0, permeability=1e-12)


@pytest.fixture
def grid10():
    return build_grid((10, 10), (1.0, 1.0))


@pytest.fixture(scope="session")
def bm_problem():
    return cases.discretize(cases.barry_mercer_undrained())


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for r in sorted(RESULTS, key=lambda r: r.number):
            terminalreporter.write_line(r.line())
