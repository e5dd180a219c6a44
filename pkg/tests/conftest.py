import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = []


@pytest.fixture
def verdict(capsys):
    """Print one acceptance line immediately and again in the terminal summary."""

    def emit(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        _LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in _LINES:
            terminalreporter.write_line(line)
