import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# Acceptance verdicts collected by test_acceptance.py: number -> (name, passed, detail).
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:>2}. {name}: {detail}")
