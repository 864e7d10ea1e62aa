"""Seeded panels of band-limited, time-concentrated test signals."""

from __future__ import annotations

import numpy as np

from .bapu import BumpProfile
from .errors import PreconditionError
from .grid import Grid, SampledSignal


def interior_window(grid: Grid, R: float) -> np.ndarray:
    """Smooth frequency window: 1 on ``|xi|_inf <= 0.8 R``, 0 beyond ``R`` (tensor product)."""
    if not R > 0:
        raise PreconditionError(f"panel band radius must be positive, got {R}")
    prof = BumpProfile.standard()
    xi = grid.freqs()
    w = np.ones(grid.shape)
    for d in range(grid.dim):
        # rho(t) is 1 for t<=1, 0 for t>=1.5: map |xi| in [0.8R, R] onto [1, 1.5]
        t = 1.0 + 0.5 * (np.abs(xi[..., d]) - 0.8 * R) / (0.2 * R)
        w *= prof(np.maximum(t, 1.0))
    return w


def packet_signal(grid: Grid, R: float, params: np.ndarray) -> SampledSignal:
    """Gaussian packets defined by their spectra, cut off smoothly at ``|xi|_inf = R``.

    ``params`` rows: ``(re c, im c, sigma_xi, x0_1..x0_n, w_1..w_n)``; the
    packet spectrum is ``c exp(-|xi - w|^2 / (2 sigma^2)) exp(-i x0.xi)``.
    """
    n = grid.dim
    xi = grid.freqs()
    spec = np.zeros(grid.shape, dtype=complex)
    for row in np.atleast_2d(params):
        c = row[0] + 1j * row[1]
        s = row[2]
        x0 = row[3 : 3 + n]
        w = row[3 + n : 3 + 2 * n]
        spec += c * np.exp(-np.sum((xi - w) ** 2, axis=-1) / (2 * s * s)) * np.exp(-1j * (xi @ x0))
    return SampledSignal.from_spectrum(grid, spec * interior_window(grid, R))


def random_panel(grid: Grid, R: float, count: int, seed: int = 0, packets: int = 3, sigma=(0.7, 1.5)) -> list:
    """``count`` signals with packet centres in ``[-T/4, T/4]^n`` and frequencies in ``0.6 R``."""
    rng = np.random.default_rng(seed)
    n = grid.dim
    out = []
    for _ in range(count):
        c = rng.standard_normal((packets, 2))
        s = rng.uniform(*sigma, size=(packets, 1))
        x0 = rng.uniform(-grid.T / 4, grid.T / 4, size=(packets, n))
        w = rng.uniform(-0.6 * R, 0.6 * R, size=(packets, n))
        out.append(packet_signal(grid, R, np.hstack([c, s, x0, w])))
    return out
