"""Shared pytest hooks: acceptance checks report one verdict line each at the end of the run."""
import re

import pytest

ACCEPTANCE_LINES: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = (bool(ok), detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)_", item.name)
    if m and report.when == "call" and report.failed and m.group(1) not in ACCEPTANCE_LINES:
        # crashed before recording a verdict
        record(m.group(1), False, f"error: {call.excinfo.typename}: {call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE_LINES, key=int):
        ok, detail = ACCEPTANCE_LINES[criterion]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}")
