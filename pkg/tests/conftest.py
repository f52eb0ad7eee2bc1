import pytest

ACCEPTANCE_LINES = []


def record(criterion: int, title: str, ok: bool, detail: str = "") -> str:
    line = f"criterion {criterion} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append((criterion, line))
    print(line)
    return line


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
