import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

_criteria: dict[int, dict] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for marker in getattr(report, "acceptance_markers", []):
        entry = _criteria.setdefault(marker["criterion"], {"name": marker["name"], "results": []})
        entry["results"].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.acceptance_markers = [
        {"criterion": m.kwargs["criterion"], "name": m.kwargs["name"]}
        for m in item.iter_markers("acceptance")
    ]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        ok = all(outcome == "passed" for _, outcome in entry["results"])
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {entry['name']}")
        for test, outcome in entry["results"]:
            terminalreporter.write_line(f"         {outcome:7s} {test}")
