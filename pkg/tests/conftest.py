import numpy as np
import pytest
from hypothesis import settings

from mslc.pointcloud import RegionOfInterest, SceneParams, Sweep, SweepStream, generate_synthetic_stream

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

SMALL_SCENE = SceneParams(n_beams=4, n_azimuth=24)


def random_sweep(rng, n, side=400.0, spread=30.0, timestamp=0, pose=None):
    pos = rng.normal(scale=spread, size=(n, 3))
    pos = np.clip(pos, -side / 2, side / 2)
    return Sweep(pos, rng.integers(0, 256, n), timestamp, pose)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_stream():
    return generate_synthetic_stream(7, 3, SMALL_SCENE)


@pytest.fixture(scope="session")
def roi():
    return RegionOfInterest()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
