"""Shared fixtures and the acceptance-criteria reporting hook."""

import pytest

_CRITERIA = {}


def record_criterion(number, description, passed, detail=""):
    _CRITERIA[number] = (description, bool(passed), detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        description, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number} [{status}] {description}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
