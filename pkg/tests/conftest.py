import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, tuple[int, str]] = {}
_outcomes: dict[int, tuple[str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _criteria[item.nodeid] = (mark.args[0], mark.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    number, _ = _criteria[report.nodeid]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[number] = ("PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in sorted(set(_criteria.values())):
        status, seconds = _outcomes.get(number, ("NOT RUN", 0.0))
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({seconds:.1f} s)")
