import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record ``(label, passed, detail)`` for the acceptance summary, then return ``passed``."""

    def record(label, passed, detail):
        line = f"{label} {'PASS' if passed else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
