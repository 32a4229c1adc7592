import numpy as np
import pytest

# acceptance criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def record_acceptance(criterion: int, name: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  [{criterion:>2}] {name}: {detail}"
    ACCEPTANCE_LINES[criterion, name] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
