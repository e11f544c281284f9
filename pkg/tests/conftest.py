import pytest

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
