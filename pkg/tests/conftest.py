import pytest

from opencarnot.fluid import SPEC_A, SpeciesSpec, StandardState


@pytest.fixture
def ss():
    return StandardState(300.0, 1.0e5)


@pytest.fixture
def spec_a():
    return SPEC_A


@pytest.fixture
def spec_b():
    return SpeciesSpec("B", Rs=200.0, cv=500.0, Uss=1000.0)


@pytest.fixture
def roster1():
    return (SPEC_A,)


@pytest.fixture
def roster2(spec_b):
    return (SPEC_A, spec_b)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
