"""Shared test plumbing: the acceptance scoreboard.

Acceptance tests report one line per criterion through the
``acceptance_report`` fixture; the lines are echoed again in a summary
block after the run so they are visible regardless of output capture.
"""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    def report(num, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {num:02d} {name}: {status}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
