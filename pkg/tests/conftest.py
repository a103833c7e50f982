import datetime
import itertools

import pytest

from mlcatalog import init_catalog
from mlcatalog.api import MLCatalog


class TickClock:
    """Deterministic clock: one second per call from a fixed epoch."""

    def __init__(self, start="2025-01-01T00:00:00+00:00"):
        self.start = datetime.datetime.fromisoformat(start)
        self.ticks = itertools.count()

    def __call__(self):
        return self.start + datetime.timedelta(seconds=next(self.ticks))


@pytest.fixture
def catalog(tmp_path):
    return init_catalog(tmp_path / "catalog")


@pytest.fixture
def ml(tmp_path):
    return MLCatalog.create(tmp_path / "catalog", cache_dir=tmp_path / "cache", clock=TickClock())


@pytest.fixture
def begin(ml, tmp_path):
    """Start executions of a throwaway workflow, each in its own root."""
    from mlcatalog.execution import ExecutionConfig
    counter = itertools.count()

    def start(**kw):
        kw.setdefault("workflow", {"name": "wf", "url": "https://example.org/wf.py",
                                   "checksum": "0" * 64})
        return ml.executions.execution_begin(ExecutionConfig(**kw),
                                             tmp_path / "exec" / str(next(counter)))
    return start


# -- acceptance reporting ------------------------------------------------------
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "seconds": 0.0})
    if rep.failed or rep.skipped:
        entry["ok"] = False
    if rep.when == "call":
        entry["seconds"] = rep.duration


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        verdict = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(
            f"criterion {number}: {verdict}  {e['title']} ({e['seconds']:.1f}s)")
