import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""

    def add(criterion: int, title: str, passed: bool, detail: str = ""):
        line = f"criterion {criterion} {'PASS' if passed else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        _LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
