import pytest

from ddscale import geom, vlm

# Criterion lines recorded by test_acceptance, echoed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def nominal_wing():
    return geom.build_wing(geom.DesignVector.nominal())


@pytest.fixture(scope="session")
def nominal_lattice(nominal_wing):
    return vlm.build_lattice(nominal_wing)


@pytest.fixture(scope="session")
def rectangle_lattice():
    return vlm.build_lattice(geom.planform_wing(geom.rectangle_planform(12.0, 1.0)))
