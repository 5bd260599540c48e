"""Shared test plumbing.

The acceptance tests each emit one PASS/FAIL verdict line; the hook
below replays them in the terminal summary so they stay visible even
when capture is on.
"""

_VERDICTS = []


def record_verdict(name: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f" | {detail}"
    _VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
