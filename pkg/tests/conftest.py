"""Shared pytest plumbing.

The acceptance tests each record a one-line verdict through the
``acceptance_report`` fixture; the collected lines are printed in a
dedicated section of the terminal summary (which pytest never captures),
so the per-criterion results are visible in any plain ``pytest`` run.
"""

import pytest

_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def record(line: str) -> None:
        _LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _LINES:
        terminalreporter.write_line(line)
