"""Shared test plumbing for the figure package.

Same scheme as the solver suite: acceptance tests emit one PASS/FAIL
verdict line each, replayed in the terminal summary.
"""

import pytest

_VERDICTS = []


def record_verdict(name: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" | {detail}"
    _VERDICTS.append(line)
    print(line)
    return ok


@pytest.fixture
def verdict():
    # fixture rather than import so combined runs with the solver's test
    # tree cannot shadow this module under the shared conftest name
    return record_verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
