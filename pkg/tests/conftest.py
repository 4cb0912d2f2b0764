import pytest

from ezsegway.netmodel import Flow, NetworkConfig
from ezsegway.scenarios import example_topology


def cfg(*flows):
    return NetworkConfig.of([Flow(i, v, p) for i, v, p in flows])


@pytest.fixture
def example():
    return example_topology()


CRITERIA: list = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    CRITERIA.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
