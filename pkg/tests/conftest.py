import sys
from pathlib import Path

# shared oracles live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

# acceptance verdicts, printed together at the end of the run
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
