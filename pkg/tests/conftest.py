from __future__ import annotations

from pathlib import Path

import pytest

from helpers import FIXTURES

_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    passed = call.excinfo is None
    prev = _ACCEPTANCE.get(number)
    status = "PASS" if passed and (prev is None or prev[1] == "PASS") else "FAIL"
    elapsed = call.duration + (prev[2] if prev else 0.0)
    _ACCEPTANCE[number] = (title, status, elapsed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, elapsed = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}  ({elapsed:.2f}s)")
