import pytest

from kakutani.system import load_system

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def sys_a():
    return load_system("sys-a")


@pytest.fixture(scope="session")
def sys_b():
    return load_system("sys-b")


@pytest.fixture(scope="session")
def sys_c():
    return load_system("sys-c")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
