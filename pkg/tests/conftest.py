import sys

from datetime import datetime, timedelta, timezone

import pytest

import scenario
from lecquiz.generation import ScriptedGenerator


class FakeClock:
    """Deterministic clock: each call advances by ``step`` seconds."""

    def __init__(self, start=datetime(2025, 1, 1, tzinfo=timezone.utc), step=7.25):
        self.now = start
        self.step = timedelta(seconds=step)

    def __call__(self):
        t = self.now
        self.now += self.step
        return t


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def sweep_inputs(tmp_path):
    cfgs = scenario.build_sweep(tmp_path / "inputs")
    make = lambda cfg: ScriptedGenerator.from_jsonl(scenario.transcript_path(tmp_path / "inputs", cfg))
    return cfgs, make


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
