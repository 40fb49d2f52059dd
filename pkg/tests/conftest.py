"""Shared test plumbing.

The acceptance tests record one verdict line per criterion; the terminal
summary hook replays them at the end of the run so the lines are visible
even when pytest captures per-test stdout.
"""

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def record():
    """Return a recorder: record(criterion, ok, detail) -> ok."""

    def _record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok

    return _record


def pytest_collection_modifyitems(items):
    # run the (hours-long) acceptance suite after the unit tests
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
