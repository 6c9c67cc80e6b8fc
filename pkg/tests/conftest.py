"""Shared pytest hooks: surface the release-gate checklist in the summary."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the PASS/FAIL lines collected by the release-gate tests.

    The gate prints its lines as tests run, but output capture hides them
    for passing tests; the terminal summary is never captured, so the
    checklist always lands in piped logs.
    """
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "REPORT_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance checklist")
        for line in lines:
            terminalreporter.write_line(line)
