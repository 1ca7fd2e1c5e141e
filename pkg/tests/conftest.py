from pathlib import Path

import pytest

from ktune.search import Status
from ktune.space import Constraint, ParameterDomain, TuningSpace
from ktune.trace import Trace, TraceRow

DATA = Path(__file__).resolve().parent.parent / "src" / "ktune" / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def wg_space() -> TuningSpace:
    """The 9-configuration WG_X/WG_Y example."""
    return TuningSpace([ParameterDomain("WG_X", [16, 32, 64]), ParameterDomain("WG_Y", [1, 2, 4, 8])],
                       [Constraint.parse("WG_X * WG_Y <= 128")])


def runtime_table(space, fn):
    return {c: fn(c) for c in space.configurations()}


@pytest.fixture
def wg_trace(wg_space) -> Trace:
    # runtimes in ns; WG_X=32, WG_Y=2 is fastest
    rows = [TraceRow(c.as_dict(), 1_000_000 + 10_000 * abs(c["WG_X"] - 32) + 50_000 * abs(c["WG_Y"] - 2),
                     1000, Status.OK) for c in wg_space.configurations()]
    return Trace("test", wg_space.sha256(), rows)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
