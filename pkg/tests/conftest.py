import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store ``(passed, detail)`` for an acceptance criterion."""

    def _record(number: int, passed: bool, detail: str = ""):
        _RESULTS[number] = (bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        ok, detail = _RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
