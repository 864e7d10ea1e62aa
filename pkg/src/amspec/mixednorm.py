"""Mixed Lebesgue norms, directional / iterated maximal functions and their checks.

The mixed norm integrates ``|f|^{p_1}`` along ``x_1`` first, raises to
``p_2/p_1`` and integrates along ``x_2``, and so on; every integral is the
rectangle rule with weight ``h``.  Maximal functions use exact suprema over
all grid-aligned intervals contained in the box (no periodic wrap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PreconditionError
from .grid import Grid, SampledSignal


@dataclass(frozen=True)
class PVec:
    """Integrability exponents ``p = (p_1..p_n)`` and summability exponent ``q``."""

    p: tuple
    q: float

    def __init__(self, p: Sequence[float] | float, q: float):
        pt = tuple(float(v) for v in np.atleast_1d(p))
        object.__setattr__(self, "p", pt)
        object.__setattr__(self, "q", float(q))
        vals = pt + (self.q,)
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise PreconditionError(f"exponents must be finite and positive, got p={pt}, q={q}")

    @property
    def dim(self) -> int:
        return len(self.p)

    @property
    def theta_floor(self) -> float:
        """min(1, q, p_1, ..., p_n)."""
        return min((1.0, self.q) + self.p)

    @property
    def J(self) -> float:
        """J = n / min(1, q, p_1, ..., p_n)."""
        return self.dim / self.theta_floor

    def tilde(self) -> tuple:
        """``p~_j = min(1, p_1, ..., p_j)``."""
        out, cur = [], 1.0
        for v in self.p:
            cur = min(cur, v)
            out.append(cur)
        return tuple(out)


def _values_and_h(f, h: float | None):
    if isinstance(f, SampledSignal):
        return f.values, f.grid.h
    if h is None:
        raise PreconditionError("raw arrays need the grid spacing h")
    return np.asarray(f), h


def mixed_norm(f, p: PVec | Sequence[float], h: float | None = None) -> float:
    """Nested rectangle-rule mixed norm ``||f||_{L_p}`` (axis x_1 innermost)."""
    vals, h = _values_and_h(f, h)
    pv = p.p if isinstance(p, PVec) else tuple(float(v) for v in np.atleast_1d(p))
    if len(pv) != vals.ndim:
        raise PreconditionError(f"{len(pv)} exponents for a {vals.ndim}-dimensional array")
    g = np.abs(vals).astype(float)
    for pj in pv:
        g = (h * np.sum(g**pj, axis=0)) ** (1.0 / pj)
    return float(g)


def subadditivity_check(f, g, p: PVec | Sequence[float], r: float, h: float | None = None, tol: float = 1e-12) -> bool:
    """Whether ``||f+g||^r <= ||f||^r + ||g||^r`` (needs ``0 < r <= min(1, p_j)``)."""
    pv = p.p if isinstance(p, PVec) else tuple(np.atleast_1d(p))
    if not (0 < r <= min((1.0,) + tuple(pv))):
        raise PreconditionError(f"r={r} must satisfy 0 < r <= min(1, p)")
    fv, h = _values_and_h(f, h)
    gv, _ = _values_and_h(g, h)
    lhs = mixed_norm(fv + gv, pv, h) ** r
    rhs = mixed_norm(fv, pv, h) ** r + mixed_norm(gv, pv, h) ** r
    return bool(lhs <= rhs * (1 + tol) + tol)


def _max_lines(lines: np.ndarray, budget: int = 1 << 24) -> np.ndarray:
    """Exact maximal interval averages for each row of a (L, N) array."""
    L, N = lines.shape
    out = np.empty_like(lines, dtype=float)
    idx = np.arange(N)
    length = (idx[None, :] - idx[:, None] + 1).astype(float)
    valid = length > 0
    step = max(1, budget // (N * N))
    for s in range(0, L, step):
        blk = lines[s : s + step]
        S = np.concatenate([np.zeros((blk.shape[0], 1)), np.cumsum(blk, axis=1)], axis=1)
        A = (S[:, None, 1:] - S[:, :N, None]) / np.where(valid, length, 1.0)
        A = np.where(valid, A, -np.inf)
        B = np.maximum.accumulate(A[..., ::-1], axis=-1)[..., ::-1]
        C = np.maximum.accumulate(B, axis=-2)
        out[s : s + step] = C[:, idx, idx]
    return out


def directional_max(f, axis: int) -> np.ndarray | SampledSignal:
    """Maximal average of ``|f|`` over grid intervals along ``axis`` (1-based).

    Accepts a :class:`SampledSignal` (returns one) or a real/complex array
    (returns an array).  Exact: every interval ``[i, j]`` containing the point
    is considered.
    """
    signal = f if isinstance(f, SampledSignal) else None
    vals = np.abs(signal.values if signal is not None else np.asarray(f)).astype(float)
    if not (1 <= axis <= vals.ndim):
        raise PreconditionError(f"axis must be in 1..{vals.ndim}, got {axis}")
    moved = np.moveaxis(vals, axis - 1, -1)
    shp = moved.shape
    res = _max_lines(moved.reshape(-1, shp[-1])).reshape(shp)
    res = np.moveaxis(res, -1, axis - 1)
    if signal is not None:
        return SampledSignal(signal.grid, res)
    return res


def iterated_max(f, theta: float):
    """``(M_n(...(M_1 |f|^theta)...))^{1/theta}``, axes applied in order 1..n."""
    if not theta > 0:
        raise PreconditionError("theta must be positive")
    signal = f if isinstance(f, SampledSignal) else None
    g = np.abs(signal.values if signal is not None else np.asarray(f)).astype(float) ** theta
    for ax in range(1, g.ndim + 1):
        g = directional_max(g, ax)
    g = g ** (1.0 / theta)
    if signal is not None:
        return SampledSignal(signal.grid, g)
    return g


def rectangle_bound_violation(f) -> float:
    """Largest ``avg_Q |f| - min_{x in Q} iterated_max(f, 1)(x)`` over every grid rectangle Q of a 2-D array.

    All ``(N(N+1)/2)^2`` rectangles are enumerated with prefix sums (averages)
    and running minima (range minima of the maximal function).  A value
    ``<= 0`` (up to round-off) means the averaging bound holds on every
    rectangle.
    """
    vals = np.abs(f.values if isinstance(f, SampledSignal) else np.asarray(f)).astype(float)
    if vals.ndim != 2:
        raise PreconditionError("rectangle enumeration needs a 2-D array")
    M = iterated_max(vals, 1.0)
    N1, N2 = vals.shape
    i0, i1 = np.triu_indices(N1)  # intervals [i0, i1] along axis 1
    S = np.concatenate([np.zeros((1, N2)), np.cumsum(vals, axis=0)], axis=0)
    col_sum = S[i1 + 1] - S[i0]  # (I, N2): sums over the axis-1 interval
    # min of M over rows i0..i1 for every column: running minima from each start
    col_min = np.empty((len(i0), N2))
    for a in range(N1):
        run = np.minimum.accumulate(M[a:], axis=0)
        sel = i0 == a
        col_min[sel] = run[i1[sel] - a]
    j0, j1 = np.triu_indices(N2)
    P = np.concatenate([np.zeros((len(i0), 1)), np.cumsum(col_sum, axis=1)], axis=1)
    area = (i1 - i0 + 1)[:, None] * (j1 - j0 + 1)[None, :]
    avg = (P[:, j1 + 1] - P[:, j0]) / area
    rmin = np.empty_like(avg)
    for b in range(N2):
        run = np.minimum.accumulate(col_min[:, b:], axis=1)
        sel = j0 == b
        rmin[:, sel] = run[:, j1[sel] - b]
    return float(np.max(avg - rmin))


def wave_packet_signal(grid: Grid, params: np.ndarray) -> SampledSignal:
    """Sum of Gaussian wave packets ``c exp(-|x-x0|^2/(2 s^2)) exp(i w.x)``.

    ``params`` rows are ``(re c, im c, s, x0_1..x0_n, w_1..w_n)``; the signal
    is defined in continuous terms so refining the grid samples the same
    function.
    """
    n = grid.dim
    X = grid.coords()
    out = np.zeros(grid.shape, dtype=complex)
    for row in np.atleast_2d(params):
        c = row[0] + 1j * row[1]
        s = row[2]
        x0 = row[3 : 3 + n]
        w = row[3 + n : 3 + 2 * n]
        d2 = np.sum((X - x0) ** 2, axis=-1)
        out += c * np.exp(-d2 / (2 * s * s)) * np.exp(1j * (X @ w))
    return SampledSignal(grid, out)


def random_packet_params(
    dim: int, count: int, rng: np.random.Generator, box: float, freq: float, widths=(0.5, 2.0)
) -> np.ndarray:
    """Random packet parameters (see :func:`wave_packet_signal`)."""
    c = rng.standard_normal((count, 2))
    s = rng.uniform(*widths, size=(count, 1))
    x0 = rng.uniform(-box, box, size=(count, dim))
    w = rng.uniform(-freq, freq, size=(count, dim))
    return np.hstack([c, s, x0, w])


def maximal_inequality_check(
    p: PVec | Sequence[float],
    theta: float,
    trials: int,
    grid: Grid,
    seed: int = 0,
    packets: int = 3,
) -> float:
    """Largest ratio ``||M_theta f||_p / ||f||_p`` over random wave-packet signals.

    Signals are defined in continuous terms (seeded), so calling this with a
    refined grid measures the same functions more finely.
    """
    pv = p.p if isinstance(p, PVec) else tuple(np.atleast_1d(p))
    if len(pv) != grid.dim:
        raise PreconditionError("exponent count must match the grid dimension")
    if not (0 < theta < min(pv)):
        raise PreconditionError(f"theta={theta} must satisfy 0 < theta < min p = {min(pv)}")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        params = random_packet_params(grid.dim, packets, rng, grid.T / 2, 4.0)
        f = wave_packet_signal(grid, params)
        num = mixed_norm(iterated_max(f.values, theta), pv, grid.h)
        den = mixed_norm(f.values, pv, grid.h)
        best = max(best, num / den)
    return best


def peetre_check(f: SampledSignal, theta: float, R: float, chunk: int = 1 << 22) -> float:
    """Fitted constant of the Peetre-type estimate for a band-limited ``f``.

    Returns ``max_x [max_y |f(y)| / <R(x-y)>^{n/theta}] / (M_theta f)(x)``.
    """
    if not theta > 0 or not R > 0:
        raise PreconditionError("theta and R must be positive")
    grid = f.grid
    X = grid.coords().reshape(-1, grid.dim)
    a = np.abs(f.values).ravel()
    mx = iterated_max(f.values, theta).ravel()
    P = X.shape[0]
    step = max(1, chunk // P)
    peetre = np.empty(P)
    for s in range(0, P, step):
        d2 = np.sum((X[s : s + step, None, :] - X[None, :, :]) ** 2, axis=-1)
        peetre[s : s + step] = np.max(a[None, :] / (1.0 + R * R * d2) ** (grid.dim / (2 * theta)), axis=1)
    ok = mx > 0
    return float(np.max(peetre[ok] / mx[ok])) if np.any(ok) else 0.0


def bump_spectrum_signal(grid: Grid, centre: Sequence[float], R: float, seed: int = 0) -> SampledSignal:
    """Band-limited signal with spectrum supported in ``centre + R[-2,2]^n``.

    The spectrum is a random smooth profile (product of compactly supported
    bumps times a random phase polynomial) placed on the frequency grid; the
    centre is snapped to the grid so shifting it is an exact modulation.
    """
    rng = np.random.default_rng(seed)
    xi = grid.freqs()
    c = np.array([round(v / grid.dxi) * grid.dxi for v in np.atleast_1d(centre)])
    u = (xi - c) / (2.0 * R)
    prof = np.ones(grid.shape)
    for d in range(grid.dim):
        t = np.clip(1.0 - u[..., d] ** 2, 0.0, None)
        prof *= np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    coef = rng.standard_normal(2 * grid.dim + 1) + 1j * rng.standard_normal(2 * grid.dim + 1)
    phase = coef[0] + sum(coef[1 + d] * u[..., d] + coef[1 + grid.dim + d] * u[..., d] ** 2 for d in range(grid.dim))
    return SampledSignal.from_spectrum(grid, prof * phase)


def peetre_shift_invariance(
    grid: Grid, theta: float, R: float, shift: Sequence[float], seed: int = 0
) -> tuple[float, float]:
    """Peetre constants for the same profile centred at 0 and at ``shift``."""
    c0 = peetre_check(bump_spectrum_signal(grid, [0.0] * grid.dim, R, seed), theta, R)
    c1 = peetre_check(bump_spectrum_signal(grid, shift, R, seed), theta, R)
    return c0, c1
