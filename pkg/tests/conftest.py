"""Shared fixtures. Every census taken anywhere in the suite is recorded so the
four-cycle bound can be enforced over the whole run."""

import functools

import pytest

from lienard_atlas import cli, cycles

CENSUS_LOG: list[tuple[str, int, int]] = []
CYCLE_BOUND = 4

_count_cycles = cycles.count_cycles


@functools.wraps(_count_cycles)
def _recording_count_cycles(p, *args, **kwargs):
    try:
        census = _count_cycles(p, *args, **kwargs)
    except cycles.ScanIncomplete as exc:
        CENSUS_LOG.append((repr(p.describe()), exc.census.n_small, exc.census.n_large))
        raise
    CENSUS_LOG.append((repr(p.describe()), census.n_small, census.n_large))
    return census


cycles.count_cycles = _recording_count_cycles
cli.count_cycles = _recording_count_cycles


def census_violations() -> list[tuple[str, int, int]]:
    return [c for c in CENSUS_LOG if c[1] + c[2] > CYCLE_BOUND]


def pytest_sessionfinish(session, exitstatus):
    bad = census_violations()
    tr = session.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line(f"census bound: {len(CENSUS_LOG)} censuses recorded, "
                      f"{len(bad)} above {CYCLE_BOUND} cycles")
    if bad:
        session.exitstatus = 1


@pytest.fixture
def report(capsys):
    """Print a line straight to the terminal, bypassing capture."""
    def emit(line: str) -> None:
        with capsys.disabled():
            print(line)
    return emit
