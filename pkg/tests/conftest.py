import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdicts():
    """Collects one PASS/FAIL line per acceptance criterion for the run summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
