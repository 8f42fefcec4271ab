from datetime import datetime

import pytest

from crashspot.ingest import Category, EventRecord, Severity, StudyWindow


def make_event(i, when="2025-01-15 10:30", lon=55.27, lat=25.20, category=Category.VehicleObject, severity=Severity.Low):
    ts = datetime.fromisoformat(when) if isinstance(when, str) else when
    return EventRecord(str(i), ts, lon, lat, category, severity)


@pytest.fixture
def study_window():
    return StudyWindow.from_strings("2024-11-05", "2025-06-02", ["2024-11-09", "2024-11-10"])


@pytest.fixture
def unit_square():
    from crashspot.ingest import BoundaryPolygon

    return BoundaryPolygon(([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)],))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
