"""Shared fixtures plus a terminal summary for the acceptance criteria."""

import re

import numpy as np
import pytest

from mixmode.environment import EnvConfig, generate

_acceptance_outcomes: dict[str, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_samples():
    return generate(EnvConfig(seed=7), 40)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    def sort_key(nodeid):
        match = re.search(r"criterion_(\d+)", nodeid)
        return int(match.group(1)) if match else 0
    for nodeid in sorted(_acceptance_outcomes, key=sort_key):
        name = nodeid.split("::")[-1]
        verdict = "PASS" if _acceptance_outcomes[nodeid] == "passed" else "FAIL"
        terminalreporter.write_line(f"{name}: {verdict}")
