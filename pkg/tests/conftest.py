"""Shared fixtures, the hypothesis profile and the acceptance-criterion report."""
from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from surrogate import surrogate_table, write_surrogate  # noqa: E402

settings.register_profile(
    "pdvoice",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "pdvoice"))

REAL_DATA_CANDIDATES = (
    os.environ.get("PDVOICE_DATASET", ""),
    str(Path(__file__).parent / "data" / "parkinsons_updrs.data"),
)


def real_dataset_path() -> Path | None:
    for cand in REAL_DATA_CANDIDATES:
        if cand and Path(cand).is_file():
            return Path(cand)
    return None


@pytest.fixture(scope="session")
def real_dataset() -> Path:
    path = real_dataset_path()
    if path is None:
        pytest.skip("UCI telemonitoring CSV not available (set PDVOICE_DATASET)")
    return path


@pytest.fixture(scope="session")
def surrogate_csv(tmp_path_factory) -> Path:
    """A small surrogate file: 12 subjects, 60-90 visits each."""
    path = tmp_path_factory.mktemp("surrogate") / "telemonitoring.csv"
    write_surrogate(path, seed=3, n_subjects=12, rows_per_subject=(60, 90))
    return path


@pytest.fixture(scope="session")
def surrogate():
    return surrogate_table(seed=3, n_subjects=12, rows_per_subject=(60, 90))


SMALL_CONFIG = """
[mlp]
max_iterations = 40

[lstm]
hidden = 6
max_epochs = 3
validation_frequency = 1
"""


@pytest.fixture
def small_config(tmp_path) -> Path:
    """A config that keeps every model tiny so end-to-end runs take seconds."""
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG)
    return path


# --------------------------------------------------------------------------
# acceptance-criterion report
#
# Tests tagged ``@pytest.mark.criterion(n, "title")`` are tallied per
# criterion; the terminal summary prints one PASS/FAIL/SKIP line for each.

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            entry = _CRITERIA.setdefault(number, {"title": title, "outcomes": [], "reasons": []})
            entry["title"] = title


def pytest_runtest_logreport(report):
    mark_args = getattr(report, "_criterion", None)
    if mark_args is None:
        return
    number = mark_args
    entry = _CRITERIA[number]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcomes"].append(report.outcome)
        if report.skipped and isinstance(report.longrepr, tuple):
            entry["reasons"].append(report.longrepr[2])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report._criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        elif "skipped" in outcomes:
            status = "PARTIAL"
        else:
            status = "PASS"
        line = f"criterion {number:2d} {status:8s} {entry['title']}"
        if status in ("SKIP", "PARTIAL") and entry["reasons"]:
            line += f"  [{entry['reasons'][0].removeprefix('Skipped: ')}]"
        terminalreporter.write_line(line)
