import os
import sys

# make tests/oracles importable as a plain package
sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = []


def record_criterion(number, name, passed, detail):
    """Register one acceptance line; printed in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] criterion {number}: {name} :: {detail}"
    _CRITERIA.append((number, line))
    print(line)


def record_info(number, detail):
    _CRITERIA.append((number, f"[INFO] criterion {number}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA, key=lambda item: item[0]):
        terminalreporter.write_line(line)
