import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the acceptance summary and assert on it."""

    def record(number, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
