import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# Filled by tests/test_acceptance.py: (criterion, passed, detail).
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0][2:].split()[0])):
        terminalreporter.write_line(f"{status:4s} {name}: {detail}")
