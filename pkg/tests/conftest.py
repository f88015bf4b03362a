from __future__ import annotations

import numpy as np
import pytest

from evcharge.config import from_dict


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def short_cfg():
    """A one-hour unit-square scenario that runs in a fraction of a second."""
    return from_dict({"sim": {"horizon_s": 3600}, "monte_carlo": {"n_runs": 2}})


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; the lines are repeated in the terminal summary."""

    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
