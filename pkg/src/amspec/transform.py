"""The phi-transform, its inverse, and the sequence / modulation (quasi-)norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bapu import BapuSystem
from .coeffs import CoeffField, Layout
from .errors import PreconditionError
from .frame import TightFrame
from .grid import Grid, SampledSignal
from .lattice import bracket
from .mixednorm import PVec, mixed_norm

DROP_TOL = 1e-14  # relative magnitude treated as FFT round-off


@dataclass(frozen=True)
class SpaceParams:
    """Smoothness ``s``, ``alpha`` and exponents ``p`` (vector), ``q``."""

    s: float
    alpha: float
    p: PVec

    def __init__(self, s: float, alpha: float, p: Sequence[float] | float, q: float | None = None):
        pv = p if isinstance(p, PVec) else PVec(p, q)
        if q is not None and isinstance(p, PVec) and p.q != q:
            raise PreconditionError("conflicting q")
        if not (0.0 <= alpha < 1.0):
            raise PreconditionError(f"alpha must lie in [0,1), got {alpha}")
        if not math.isfinite(s):
            raise PreconditionError("s must be finite")
        object.__setattr__(self, "s", float(s))
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "p", pv)

    @property
    def q(self) -> float:
        return self.p.q

    def shifted(self, ds: float) -> "SpaceParams":
        return SpaceParams(self.s + ds, self.alpha, self.p)


def analyze(frame: TightFrame, f: SampledSignal) -> CoeffField:
    """``S_phi f = {<f, phi_{k,l}>}``."""
    return frame.analyze(f)


def synthesize(frame: TightFrame, c: CoeffField) -> SampledSignal:
    """``T_phi c = sum c_{k,l} phi_{k,l}``."""
    return frame.synthesize(c)


def _check_dim(sp: SpaceParams, dim: int) -> None:
    if sp.p.dim != dim:
        raise PreconditionError(f"{sp.p.dim} integrability exponents for dimension {dim}")


def _raster_balls(grid: Grid, centres: np.ndarray, radius: float, weights: np.ndarray, chunk: int = 1 << 21) -> np.ndarray:
    """``sum_i w_i 1_{B(c_i, radius)}`` at the grid samples (closed balls, no wrap).

    Each ball is a union of intervals along ``x_1`` (one per grid line of the
    remaining axes); intervals are accumulated in a difference array.
    """
    n, N, h, T = grid.dim, grid.N, grid.h, grid.T
    R2 = radius * radius * (1 + 1e-12)
    W = int(math.floor(2 * radius / h)) + 2
    if n > 1:
        rest = np.stack([m.ravel() for m in np.meshgrid(*[np.arange(W)] * (n - 1), indexing="ij")], axis=-1)
    else:
        rest = np.zeros((1, 0), dtype=np.int64)
    strides = N ** np.arange(n - 2, -1, -1) if n > 1 else np.zeros(0, dtype=np.int64)
    plane = N ** (n - 1)
    diff = np.zeros((N + 1) * plane)
    step = max(1, chunk // len(rest))
    for s0 in range(0, len(centres), step):
        c = centres[s0 : s0 + step]
        w = np.broadcast_to(weights[s0 : s0 + step, None], (len(c), len(rest)))
        i0 = np.ceil((c[:, 1:] - radius + T) / h - 1e-9).astype(np.int64)
        idx = i0[:, None, :] + rest[None, :, :]
        d2 = np.sum((-T + idx * h - c[:, None, 1:]) ** 2, axis=-1)
        ok = (d2 <= R2) & np.all((idx >= 0) & (idx < N), axis=-1)
        half = np.sqrt(np.where(ok, R2 - d2, 0.0))
        lo = np.ceil((c[:, None, 0] - half + T) / h - 1e-9).astype(np.int64)
        hi = np.floor((c[:, None, 0] + half + T) / h + 1e-9).astype(np.int64)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, N - 1)
        ok &= lo <= hi
        flat_rest = idx @ strides if n > 1 else np.zeros(ok.shape, dtype=np.int64)
        diff += np.bincount((lo * plane + flat_rest)[ok], weights=w[ok], minlength=diff.size)
        diff -= np.bincount(((hi + 1) * plane + flat_rest)[ok], weights=w[ok], minlength=diff.size)
    out = np.cumsum(diff.reshape((N + 1,) + (N,) * (n - 1)), axis=0)[:N]
    return out


def seq_norm(c: CoeffField, sp: SpaceParams, grid: Grid, drop_tol: float = DROP_TOL) -> float:
    """Discrete norm ``(sum_j ||sum_m r_j^{s+n/2} |b_{j,m}| 1_{Q(j,m)}||_p^q)^{1/q}``.

    The balls ``Q(j,m) = B(-x_{j,m}, 1/r_j)`` are rasterised on ``grid``.
    Entries below ``drop_tol * max|b|`` (round-off of the FFT) are skipped.
    """
    lay = c.layout
    g = lay.geometry
    n = g.dim
    _check_dim(sp, n)
    total = 0.0
    cut = drop_tol * (np.max(np.abs(c.data)) if c.data.size else 0.0)
    for i, k in enumerate(lay.ks):
        b = np.abs(c.block(i)).ravel()
        nz = np.flatnonzero(b > cut)
        if len(nz) == 0:
            continue
        r = float(g.r(k.astype(float)))
        ells = lay.ells(i)[nz]
        centres = -g.x(np.broadcast_to(k.astype(float), ells.shape), ells.astype(float))
        F = _raster_balls(grid, centres, 1.0 / r, r ** (sp.s + n / 2) * b[nz])
        total += mixed_norm(F, sp.p, grid.h) ** sp.q
    return total ** (1.0 / sp.q)


def band_signal(system: BapuSystem, grid: Grid, fhat: np.ndarray, k, cut: float = 0.0) -> np.ndarray | None:
    """``F^{-1}(phi_k fhat)`` on the grid, or None if the band is below ``cut``."""
    blk = system.phi_block(k, grid)
    part = fhat[blk.slices()] * blk.values
    if not np.any(np.abs(part) > cut):
        return None
    spec = np.zeros(grid.shape, dtype=complex)
    spec[blk.slices()] = part
    return grid.inverse(spec)


def mod_norm(f: SampledSignal, sp: SpaceParams, system: BapuSystem, drop_tol: float = DROP_TOL) -> float:
    """``(sum_k r_k^{qs} ||F^{-1}(phi_k F f)||_p^q)^{1/q}`` over the truncated bumps.

    Bands whose spectrum stays below ``drop_tol * max|f^|`` are skipped.
    """
    grid = f.grid
    g = system.geometry
    _check_dim(sp, g.dim)
    fhat = f.spectrum()
    cut = drop_tol * float(np.max(np.abs(fhat)))
    total = 0.0
    for k in system.ks:
        band = band_signal(system, grid, fhat, k, cut)
        if band is None:
            continue
        r = float(g.r(k.astype(float)))
        total += r ** (sp.q * sp.s) * mixed_norm(band, sp.p, grid.h) ** sp.q
    return total ** (1.0 / sp.q)


@dataclass
class NormRatioReport:
    ratio_min: float
    ratio_max: float
    ratios: np.ndarray

    def to_json(self) -> dict:
        return {"ratio_min": float(self.ratio_min), "ratio_max": float(self.ratio_max)}


def norm_equivalence_check(frame: TightFrame, panel, sp: SpaceParams) -> NormRatioReport:
    """Ratios ``seq_norm(S_phi f) / mod_norm(f)`` over a nonempty panel."""
    if len(panel) == 0:
        raise PreconditionError("empty panel")
    ratios = []
    for f in panel:
        den = mod_norm(f, sp, frame.system)
        if den == 0:
            raise PreconditionError("panel contains a zero signal")
        ratios.append(seq_norm(frame.analyze(f), sp, frame.grid) / den)
    ratios = np.array(ratios)
    return NormRatioReport(float(ratios.min()), float(ratios.max()), ratios)


def growth_class(c: CoeffField, beta: float) -> float:
    """``sup <k>^{-beta} |b_{k,l}|`` over the stored entries."""
    lay = c.layout
    if c.data.size == 0:
        return 0.0
    kb = bracket(lay.ks.astype(float)) ** (-beta)
    return float(np.max(np.abs(c.data) * kb[lay.k_of]))


__all__ = [
    "CoeffField",
    "Layout",
    "SpaceParams",
    "analyze",
    "synthesize",
    "seq_norm",
    "mod_norm",
    "band_signal",
    "norm_equivalence_check",
    "growth_class",
    "NormRatioReport",
]
