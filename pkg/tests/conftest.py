import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, name, passed, detail)``.

    ``passed=None`` marks a criterion that is out of scope.
    """
    def record(num, name, passed, detail=""):
        _ACCEPTANCE.append((num, name, None if passed is None else bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "N/A " if passed is None else "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {num:>2}. {name}  {detail}")
