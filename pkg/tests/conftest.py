"""Shared fixtures and the acceptance report printed at the end of the session."""

import pytest

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        prev = ACCEPTANCE.get(number)
        if prev is not None:  # a criterion made of several checks passes only if all do
            passed = passed and prev[0]
            detail = f"{prev[1]}; {detail}"
        ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 11):
        if number not in ACCEPTANCE:
            terminalreporter.write_line(f"criterion {number:2d}: NOT RUN")
            continue
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}",
                                    green=passed, red=not passed)
