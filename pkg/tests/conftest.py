import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "self-parity at full fixture scale",
    2: "reconciliation tolerance",
    3: "IR validity mutation suite",
    4: "divergence taxonomy injection",
    5: "hierarchy lint",
    6: "analyzer oracle",
    7: "gate semantics",
    8: "parameter resolution",
    9: "provenance",
    10: "encoded CDISCPILOT01 anchors",
}

_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion): exit criterion from the acceptance list")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[marker.args[0]].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {CRITERIA[n]}: {status} ({len(results or [])} test(s))")
