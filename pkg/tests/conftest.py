"""Shared fixtures for the calderon_lab test suite."""

from __future__ import annotations

import numpy as np
import pytest

from calderon_lab.geometry import Grid, metric_preset
from calderon_lab.operators import assemble

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_report(request, capsys):
    """Record and print one ``criterion k: PASS|FAIL`` line."""

    def report(number: int, title: str, passed: bool, detail: str = ""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        request.config.stash[_ACCEPTANCE].append(line)
        with capsys.disabled():
            print("\n" + line)
        return line

    return report


@pytest.fixture(scope="session")
def grid16():
    return Grid(3, 16, 16)


@pytest.fixture(scope="session")
def flat16(grid16):
    return assemble(metric_preset("flat", 3), grid16)


@pytest.fixture(scope="session")
def wave16(grid16):
    return assemble(metric_preset("tangential_wave", 3), grid16)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
