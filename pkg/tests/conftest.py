import numpy as np
import pytest

from dptraj.geo import BoundingBox, GridSpec


def unit_grid(u_h, u_w):
    """Grid whose cells are 1x1 degree squares starting at the origin."""
    return GridSpec(u_h, u_w, BoundingBox.from_bounds(0.0, 0.0, float(u_w), float(u_h)))


@pytest.fixture
def grid23():
    # 2 rows x 3 columns, anchors C0..C5 row-major from the bottom-left.
    return unit_grid(2, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One PASS/FAIL line per acceptance criterion, printed after the run.
_criteria: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    if report.when == "call" or report.failed:
        _criteria[number] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
