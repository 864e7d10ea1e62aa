"""Fourier multipliers ``m(D)``: symbol classes, matrices and their action."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sps

from .admat import AdParams, MembershipReport, OpMatrix, frame_matrix, is_almost_diagonal
from .coeffs import CoeffField
from .errors import DimensionMismatch, PreconditionError
from .frame import TightFrame
from .grid import Grid, SampledSignal
from .lattice import bracket
from .transform import SpaceParams, mod_norm

STEP_DIVISOR = 32.0  # finite-difference step <xi>^alpha / STEP_DIVISOR
GROWTH_LIMIT = 1.5  # seminorm growth under extent doubling that flags a symbol
STEP_TOL = 0.05  # relative seminorm change under step halving that flags a symbol


@dataclass(frozen=True)
class Symbol:
    """A symbol ``m: R^n -> C`` with a nominal order ``b``.

    ``func`` takes an array of frequencies ``(..., n)`` and returns complex
    values of shape ``(...)``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    order: float
    name: str = "symbol"

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.asarray(self.func(xi), dtype=complex)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self(grid.freqs())

    @classmethod
    def one(cls) -> "Symbol":
        return cls(lambda xi: np.ones(xi.shape[:-1]), 0.0, "one")

    @classmethod
    def bracket_power(cls, b: float) -> "Symbol":
        """``<xi>^b``, of order ``b`` in every class."""
        return cls(lambda xi: bracket(xi) ** b, float(b), f"bracket^{b:g}")

    @classmethod
    def chirp(cls) -> "Symbol":
        """``exp(i |xi|^2)``: bounded but in no class with alpha < 1."""
        return cls(lambda xi: np.exp(1j * np.sum(xi * xi, axis=-1)), 0.0, "chirp")

    @classmethod
    def from_csv(cls, path: str | Path, order: float = 0.0) -> "Symbol":
        """Tabulated symbol: CSV rows ``xi,re,im`` with linear interpolation.

        In one dimension the table is indexed by the signed frequency (so
        non-even symbols are possible); for ``n >= 2`` it is read as a radial
        profile in ``|xi|``.  Outside the table the end values are held constant.
        """
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row[:3]])
                except ValueError:
                    continue  # header
        if len(rows) < 2:
            raise PreconditionError(f"{path}: need at least two rows xi,re,im")
        tab = np.array(rows)
        tab = tab[np.argsort(tab[:, 0])]
        t, re, im = tab[:, 0], tab[:, 1], tab[:, 2]

        def func(xi):
            rad = xi[..., 0] if xi.shape[-1] == 1 else np.sqrt(np.sum(xi * xi, axis=-1))
            return np.interp(rad, t, re) + 1j * np.interp(rad, t, im)

        return cls(func, float(order), Path(path).name)


def _difference(m: Symbol, xi: np.ndarray, eta: tuple, h: np.ndarray) -> np.ndarray:
    """Central difference quotient approximating ``D^eta m`` at the points ``xi``."""
    n = xi.shape[-1]
    out = np.zeros(xi.shape[:-1], dtype=complex)
    ranges = [range(e + 1) for e in eta]
    for idx in itertools.product(*ranges):
        coef = 1.0
        shift = np.zeros(n)
        for d, (e, i) in enumerate(zip(eta, idx)):
            coef *= (-1) ** i * math.comb(e, i)
            shift[d] = e / 2.0 - i
        out += coef * m(xi + h[..., None] * shift)
    return out / h ** sum(eta)


def symbol_seminorms(m: Symbol, alpha: float, b: float, max_order: int, xi: np.ndarray,
                     divisor: float = STEP_DIVISOR) -> dict[int, float]:
    """``sup_xi <xi>^{alpha|eta| - b} |D^eta m(xi)|`` per total order ``|eta|``."""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    br = bracket(xi)
    h = br**alpha / divisor
    out = {}
    for order in range(max_order + 1):
        best = 0.0
        for eta in itertools.product(range(order + 1), repeat=n):
            if sum(eta) != order:
                continue
            D = _difference(m, xi, eta, h)
            best = max(best, float(np.max(br ** (alpha * order - b) * np.abs(D))))
        out[order] = best
    return out


@dataclass
class SymbolReport:
    seminorms: dict
    seminorms_doubled: dict
    step_stability: float
    in_class: bool

    def to_json(self) -> dict:
        return {
            "seminorms": {str(k): v for k, v in self.seminorms.items()},
            "seminorms_doubled": {str(k): v for k, v in self.seminorms_doubled.items()},
            "step_stability": self.step_stability,
            "in_class": self.in_class,
        }


def _probe_freqs(dim: int, extent: float, per_axis: int) -> np.ndarray:
    ax = np.linspace(-extent, extent, per_axis)
    return np.stack(np.meshgrid(*[ax] * dim, indexing="ij"), axis=-1).reshape(-1, dim)


def symbol_class_check(m: Symbol, alpha: float, b: float | None = None, max_order: int = 3, dim: int = 1,
                       extent: float = 16.0, per_axis: int | None = None) -> SymbolReport:
    """Finite-difference class certificate on ``[-extent, extent]^n`` and its doubling.

    The symbol is flagged (``in_class = False``) when some seminorm grows by
    more than ``GROWTH_LIMIT`` when the probed extent doubles, or when the
    difference quotients are not resolved: the step stability (largest
    relative change of a seminorm when the step is halved) exceeds
    ``STEP_TOL``.
    """
    if not (0.0 <= alpha < 1.0):
        raise PreconditionError(f"alpha must lie in [0,1), got {alpha}")
    b = m.order if b is None else float(b)
    if per_axis is None:
        per_axis = 2001 if dim == 1 else 121
    xi1 = _probe_freqs(dim, extent, per_axis)
    xi2 = _probe_freqs(dim, 2 * extent, 2 * per_axis - 1)
    s1 = symbol_seminorms(m, alpha, b, max_order, xi1)
    s2 = symbol_seminorms(m, alpha, b, max_order, xi2)
    s_half = symbol_seminorms(m, alpha, b, max_order, xi1, divisor=2 * STEP_DIVISOR)
    stab = max(abs(s_half[o] - s1[o]) / max(s1[o], 1e-300) for o in s1)
    ok = all(s2[o] <= GROWTH_LIMIT * s1[o] + 1e-12 for o in s1) and stab <= STEP_TOL
    return SymbolReport(s1, s2, float(stab), bool(ok))


# -- matrices --------------------------------------------------------------------
def multiplier_matrix(m: Symbol, frame: TightFrame) -> OpMatrix:
    """``[<m(D) phi_{k,l}, phi_{j,m}>]`` (rows ``(j,m)``)."""
    return frame_matrix(frame, m.on_grid(frame.grid))


def rescale_columns(A: OpMatrix, b: float) -> OpMatrix:
    """Multiply column ``(k,l)`` by ``<xi_k>^{-b}``."""
    lay = A.col_layout
    w = bracket(lay.geometry.xi(lay.ks.astype(float))) ** (-b)
    return OpMatrix(sps.csr_matrix(A.mat @ sps.diags(w[lay.k_of])), A.row_layout, A.col_layout)


def multiplier_is_ad(m: Symbol, frame: TightFrame, par: AdParams, doubled: TightFrame | None = None,
                     b: float | None = None) -> MembershipReport:
    """Membership of ``<xi_k>^{-b} [<m(D) phi_{k,l}, phi_{j,m}>]`` in the almost-diagonal class."""
    b = m.order if b is None else float(b)
    A = rescale_columns(multiplier_matrix(m, frame), b)
    D = rescale_columns(multiplier_matrix(m, doubled), b) if doubled is not None else None
    return is_almost_diagonal(A, par, D)


def row_decay_constant(A: OpMatrix, b: float, N: float) -> float:
    """``max |A| <xi_k>^{-b} (1 + |x_{j,m} - x_{k,l}| a r_min / pi)^N`` over stored entries.

    The distance is measured on the torus and in units of the coarser
    translation step, which is ``|m - l|`` whenever both lattices agree.
    """
    B = rescale_columns(A, b).mat.tocoo()
    if B.nnz == 0:
        return 0.0
    rl, cl = A.row_layout, A.col_layout
    g = rl.geometry
    period = 2.0 * rl.truncation.T
    xr, xc = rl.x_of()[B.row], cl.x_of()[B.col]
    dx = xr - xc
    dx -= period * np.round(dx / period)
    rmin = np.minimum(rl.r_of()[B.row], cl.r_of()[B.col])
    units = np.sqrt(np.sum(dx * dx, axis=-1)) * g.a * rmin / math.pi
    return float(np.max(np.abs(B.data) * (1 + units) ** N))


# -- action on signals ------------------------------------------------------------
def apply_multiplier(m: Symbol, f: SampledSignal, route: str = "direct", frame: TightFrame | None = None,
                     matrix: OpMatrix | None = None) -> SampledSignal:
    """``m(D) f`` either directly in frequency or through the frame matrix."""
    if route == "direct":
        return SampledSignal.from_spectrum(f.grid, m.on_grid(f.grid) * f.spectrum())
    if route == "matrix":
        if frame is None:
            raise PreconditionError("the matrix route needs a frame")
        if f.grid != frame.grid:
            raise DimensionMismatch("signal and frame grids differ")
        M = matrix if matrix is not None else multiplier_matrix(m, frame)
        c = frame.analyze(f)
        return frame.synthesize(CoeffField(frame.layout, M.mat @ c.data))
    raise PreconditionError(f"unknown route {route!r}; use 'direct' or 'matrix'")


@dataclass
class BoundednessReport:
    ratio_min: float
    ratio_max: float

    def to_json(self) -> dict:
        return {"ratio_min": self.ratio_min, "ratio_max": self.ratio_max}


def boundedness_check(m: Symbol, panel, sp: SpaceParams, frame: TightFrame, b: float | None = None) -> BoundednessReport:
    """Ratios ``||m(D) f||_{s} / ||f||_{s+b}`` of the modulation norms over a panel."""
    if len(panel) == 0:
        raise PreconditionError("empty panel")
    b = m.order if b is None else float(b)
    ratios = []
    for f in panel:
        den = mod_norm(f, sp.shifted(b), frame.system)
        if den == 0:
            raise PreconditionError("panel contains a zero signal")
        ratios.append(mod_norm(apply_multiplier(m, f), sp, frame.system) / den)
    return BoundednessReport(float(min(ratios)), float(max(ratios)))
