import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one acceptance line; printed in the terminal summary."""
    def _record(key: str, passed: bool, detail: str):
        _RESULTS[key] = (bool(passed), detail)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: int(k.split()[0])):
        passed, detail = _RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")
