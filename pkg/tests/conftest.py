import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: list[tuple[object, bool, str]] = []


def record_criterion(number, ok: bool, detail: str) -> None:
    """Collect an acceptance-criterion outcome for the terminal summary."""
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    _CRITERIA.append((number, ok, detail))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in _CRITERIA:
        terminalreporter.write_line(
            f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        )
