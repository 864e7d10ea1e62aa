import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from amspec.bapu import BapuSystem, BumpProfile  # noqa: E402
from amspec.frame import TightFrame  # noqa: E402
from amspec.grid import Grid  # noqa: E402
from amspec.lattice import AlphaGeometry, Truncation, default_a, interior_half_width  # noqa: E402
from amspec.panels import random_panel  # noqa: E402


def make_frame(alpha, T, N, kmax, c1=1.0, dim=1, profile=None):
    """Tight frame with the commensurate default lattice constant."""
    g = AlphaGeometry(alpha, dim, c1, default_a(c1, dim, T))
    system = BapuSystem(g, Truncation(kmax, T), profile or BumpProfile.standard())
    return TightFrame(system, Grid(dim, T, N))


def band_radius(frame):
    return interior_half_width(frame.geometry, frame.truncation)


@pytest.fixture(scope="session")
def frame1():
    """Desk-scale one-dimensional frame: alpha = 0, T = 32, N = 1024, kmax = 16."""
    return make_frame(0.0, 32.0, 1024, 16)


@pytest.fixture(scope="session")
def frame1_small():
    """Small one-dimensional frame for fast structural checks."""
    return make_frame(0.0, 16.0, 256, 4)


@pytest.fixture(scope="session")
def frame_half():
    """alpha = 1/2, n = 1, T = 16, kmax = 4 (N = 512 reaches the outer radius)."""
    return make_frame(0.5, 16.0, 512, 4)


@pytest.fixture(scope="session")
def frame2():
    """Two-dimensional frame: alpha = 0, T = 16, N = 128, kmax = 3."""
    return make_frame(0.0, 16.0, 128, 3, dim=2)


@pytest.fixture(scope="session")
def panel1(frame1):
    return random_panel(frame1.grid, band_radius(frame1), 4, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
