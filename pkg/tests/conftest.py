"""Shared fixtures and the acceptance summary.

Tests marked ``@pytest.mark.criterion(n, "title")`` are grouped per
criterion; the terminal summary prints one pass/fail line for each, with any
details recorded through the ``measure`` fixture.
"""
import os
import pathlib
from collections import OrderedDict

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

_RESULTS = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def _entry(item):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return None
    n, title = mark.args
    return _RESULTS.setdefault(n, {"title": title, "outcomes": [], "details": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    entry = _entry(item)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        e = _RESULTS[n]
        ok = e["outcomes"] and all(o == "passed" for o in e["outcomes"])
        status = "PASS" if ok else "FAIL"
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {n} [{status}] {e['title']}" + (f": {detail}" if detail else ""))


@pytest.fixture
def measure(request):
    """Attach a measured quantity to the current criterion's summary line."""
    entry = _entry(request.node)

    def record(text):
        if entry is not None:
            entry["details"].append(text)

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def configs_dir():
    return pathlib.Path(CONFIGS)
