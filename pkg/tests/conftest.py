import numpy as np
import pytest

ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def record():
    """Collects acceptance outcomes for the end-of-run summary."""
    def _record(criterion, passed, detail=""):
        ACCEPTANCE.append((criterion, bool(passed), detail))
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}")
