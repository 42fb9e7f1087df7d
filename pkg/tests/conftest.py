import re

import pytest

from evgp.cycles import VehicleParams, central_difference, guard_scenarios, to_wheel_loads
from evgp.fixtures import load_fixture

_criteria = {}


@pytest.fixture(scope="session")
def vp():
    return VehicleParams()


@pytest.fixture(scope="session")
def wltc_loads(vp):
    return to_wheel_loads(central_difference(load_fixture("wltc")), vp)


@pytest.fixture(scope="session")
def guards(vp):
    return guard_scenarios(vp)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    detail = dict(report.user_properties).get("detail", "")
    _criteria[int(m.group(1))] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}".rstrip())
