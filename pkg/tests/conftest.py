import os
from pathlib import Path

import numpy as np
import pytest

REPLAY_DIR = Path(os.environ.get("RETOM_REPLAY_DIR", Path(__file__).resolve().parent.parent / "oracle_replays"))

_acceptance = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def replay_dir():
    return REPLAY_DIR


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = getattr(item, "acceptance_detail", "")
        _acceptance.append((marker.args[0] if marker.args else item.name, report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in sorted(_acceptance, key=lambda r: r[0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
