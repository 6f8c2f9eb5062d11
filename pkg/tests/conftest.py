from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from lcr.synthetic import DESK_DIR

_criteria: list[tuple[int, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        _criteria.append((number, title, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(_criteria):
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}")


@pytest.fixture
def desk(tmp_path) -> Path:
    """Writable copy of the bundled desk dataset."""
    target = tmp_path / "desk"
    shutil.copytree(DESK_DIR, target)
    return target
