import numpy as np
import pytest

_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _ACCEPTANCE_RESULTS.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        flag = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{flag}] {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
