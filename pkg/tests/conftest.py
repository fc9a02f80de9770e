"""Shared test plumbing: replay acceptance criterion lines after the run."""

import pytest

_criterion_lines: "list[str]" = []


@pytest.fixture(scope="session")
def criterion_lines():
    """Accumulator the acceptance tests append their PASS/FAIL lines to."""
    return _criterion_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
