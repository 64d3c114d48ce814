"""Collects acceptance-criterion outcomes and prints one line per criterion."""
from collections import OrderedDict

import pytest

_outcomes = OrderedDict()
_titles = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _titles[number] = title
    passed = _outcomes.setdefault(number, True)
    if report.failed or (report.when == "call" and not report.passed):
        _outcomes[number] = False
    elif report.when == "call":
        _outcomes[number] = passed and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        verdict = "PASS" if _outcomes[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {_titles[number]}")
