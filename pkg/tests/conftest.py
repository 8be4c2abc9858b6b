import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_REPORT_PATH = os.path.join(os.path.dirname(__file__), "..", "acceptance_report.txt")
_lines = []


def criterion_line(number: int, passed: bool, detail: str) -> None:
    """One pass/fail line per acceptance criterion, printed and persisted."""
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    _lines.append(line)
    print(line)
    with open(_REPORT_PATH, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def pytest_sessionstart(session):
    try:
        os.remove(_REPORT_PATH)
    except OSError:
        pass


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in _lines:
            terminalreporter.write_line(line)
