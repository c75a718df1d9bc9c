import re

import numpy as np
import pytest

_criteria: dict = {}


@pytest.fixture
def rs():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("detail", "")
        _criteria[int(m.group(1))] = (report.outcome.upper(), detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcome, detail = _criteria[n]
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}")
