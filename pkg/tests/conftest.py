import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def record():
    """Log a one-line acceptance verdict; every line is repeated in the terminal summary."""

    def _record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
