import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
