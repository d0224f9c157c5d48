import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vessel_behavior.core import PositionSequence, VesselType

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


def make_track(sog, cog, mmsi="111111111", dt=10, t0=1_425_168_000, lat0=30.0, lon0=122.0,
               vessel_type=VesselType.OTHER) -> PositionSequence:
    """Track with the given kinematics; positions drift slowly east so bounds hold."""
    sog = np.asarray(sog, dtype=np.float64)
    cog = np.asarray(cog, dtype=np.float64)
    n = len(sog)
    t = t0 + dt * np.arange(n)
    lat = np.full(n, lat0)
    lon = lon0 + 1e-5 * np.arange(n)
    return PositionSequence.from_arrays(mmsi, t, lat, lon, sog, np.mod(cog, 360.0), vessel_type)


@pytest.fixture
def track_factory():
    return make_track


# -- acceptance report --------------------------------------------------------
# Tests marked ``criterion(name)`` store a one-line detail here; the terminal
# summary prints one PASS/FAIL line per criterion.

ACCEPTANCE_DETAILS: dict[str, str] = {}
_ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE_RESULTS.append((marker.args[0], rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok in _ACCEPTANCE_RESULTS:
        detail = ACCEPTANCE_DETAILS.get(name, "")
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name:<22} {detail}")
