import os
from pathlib import Path

import numpy as np
import pytest

from rulmae.ingest import generate_synthetic
from rulmae.model import ModelDims


def cmapss_dir():
    """Directory holding the NASA C-MAPSS text files, if the user provides one."""
    raw = os.environ.get("RULMAE_CMAPSS_DIR")
    if raw and (Path(raw) / "train_FD001.txt").exists():
        return Path(raw)
    return None


@pytest.fixture(scope="session")
def synth_split():
    return generate_synthetic(6, (60, 90), 12, 0.02, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dims():
    return ModelDims(J=2, d=8, heads=2, layers=2, K=3, P=10, dropout=0.1)


# --- one summary line per acceptance criterion -------------------------------

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and report.skipped):
        if report.skipped:
            status = "SKIP"
            detail = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        else:
            status = "PASS" if report.passed else "FAIL"
        _CRITERIA.append((status, marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}: {detail}")
