"""Collects one verdict line per acceptance criterion and prints them at the end of the run."""

VERDICTS: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> bool:
    VERDICTS[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
