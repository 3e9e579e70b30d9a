import warnings
from collections import OrderedDict

import pytest

from ghft.spacetime import ConeWrapWarning

_CRITERIA: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")
    warnings.simplefilter("ignore", ConeWrapWarning)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, {"title": title, "passed": True, "notes": []})
    entry["passed"] &= rep.passed
    for key, value in item.user_properties:
        if key == "measured":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["passed"] else "FAIL"
        notes = "; ".join(e["notes"])
        tr.write_line(f"criterion {n}: {status}  {e['title']}" + (f"  [{notes}]" if notes else ""))


@pytest.fixture
def measured(request):
    """Attach a measured quantity to the acceptance summary line."""

    def record(text: str) -> None:
        request.node.user_properties.append(("measured", text))

    return record
