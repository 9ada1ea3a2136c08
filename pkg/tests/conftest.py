import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict_line():
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""

    def emit(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
