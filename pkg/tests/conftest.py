import pytest

_REPORT = []


@pytest.fixture
def report():
    """Record one summary line for an acceptance criterion."""

    def record(criterion, passed, detail, soft=False):
        status = "PASS" if passed else "FAIL"
        tag = f"{status} (soft)" if soft else status
        _REPORT.append(f"[{tag}] criterion {criterion}: {detail}")
        print(_REPORT[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in _REPORT:
        terminalreporter.write_line(line)
