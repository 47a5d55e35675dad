"""Acceptance bookkeeping: tests marked ``acceptance(n)`` roll up into one line per criterion."""

import pytest

CRITERIA = {
    1: "approximation-bound certification on the Omega-excluded grid",
    2: "uniform-bound certification on the full grid",
    3: "building-block error bounds (product, monomial, fitter, step)",
    4: "exact formula reproduction (NRE, prefactor identity, planner)",
    5: "rate reproduction at desk scale",
    6: "projection and dimension-estimate properties",
    7: "infrastructure (serialization, gradients, determinism, oracles)",
}

_outcomes: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): counts toward acceptance criterion n")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(crit, []).append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(CRITERIA):
        runs = _outcomes.get(crit)
        if not runs:
            terminalreporter.write_line(f"criterion {crit}: NOT RUN  {CRITERIA[crit]}")
            continue
        failed = [nodeid for nodeid, outcome in runs if outcome != "passed"]
        status = "PASS" if not failed else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {status}  {CRITERIA[crit]}  "
                                    f"({len(runs) - len(failed)}/{len(runs)} checks)")
        for nodeid in failed:
            terminalreporter.write_line(f"    failed: {nodeid}")


@pytest.fixture
def report_line(record_property):
    """Attach a short measurement to the test report (shown with -rA and in junit XML)."""
    def _record(text):
        record_property("detail", text)
        print(text)
    return _record
