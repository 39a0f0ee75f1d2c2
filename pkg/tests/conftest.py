"""Shared pytest plumbing: the acceptance-criteria summary table.

Tests marked @pytest.mark.criterion(n, "title") report into a one-line-per-
criterion PASS/FAIL block at the end of the run, so the acceptance status is
readable without scrolling through test ids.
"""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, title): tie a test to one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    if rep.when == "call":
        ok = rep.passed
    elif rep.failed:  # setup/teardown error counts against the criterion
        ok = False
    else:
        return
    prev_title, prev_ok = _RESULTS.get(num, (title, True))
    _RESULTS[num] = (title, prev_ok and ok)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, ok = _RESULTS[num]
        tr.write_line(f"  criterion {num:>2}  {title:<52} "
                      f"{'PASS' if ok else 'FAIL'}")
