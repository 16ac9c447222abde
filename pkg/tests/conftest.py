from __future__ import annotations

import pytest

from gsee_lab.spectrum import synth


@pytest.fixture
def two_level():
    return synth([-0.5, 0.5], [0.6, 0.4])


@pytest.fixture
def three_level():
    return synth([-0.5, -0.42, 0.5], [0.5, 0.3, 0.2])


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
