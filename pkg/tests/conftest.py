import pytest

from tripletsim.budget import budget_report, reference_budget
from tripletsim.config import load_config

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def budget():
    return reference_budget()


@pytest.fixture(scope="session")
def report(budget):
    return budget_report(budget)


@pytest.fixture(scope="session")
def loaded():
    return load_config("paper_table1")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
