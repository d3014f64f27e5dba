import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# filled by test_acceptance.report(); one (status, name, detail) per criterion
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{status:4s}  {name}: {detail}")
