from __future__ import annotations

import logging

import numpy as np
import pytest

from qpf.dcpf import ieee5_system, scale_system

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def ieee5():
    return ieee5_system()


@pytest.fixture(scope="session")
def scaled5():
    return scale_system(ieee5_system())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def report_line():
    """Record one pass/fail line for the acceptance summary, then assert it."""

    def _record(label: str, passed: bool, detail: str) -> None:
        _CRITERIA.append(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")
        assert passed, detail

    return _record


def pytest_configure(config):
    logging.getLogger("qpf").setLevel(logging.ERROR)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
