import pytest

VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record a one-line acceptance verdict; printed again in the terminal summary."""
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        VERDICTS[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
