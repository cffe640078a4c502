"""Shared test configuration.

Acceptance tests (tests/test_acceptance.py) register one summary line per
criterion; the terminal summary prints them so a full run ends with an
explicit pass/fail line for every acceptance criterion.
"""

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or report.when != "call":
        return
    name = report.nodeid.split("::")[-1]
    if report.skipped:
        outcome = "SKIP"
    else:
        outcome = "PASS" if report.passed else "FAIL"
    _acceptance_results[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{name}: {_acceptance_results[name]}")
