"""The tight frame of localised trigonometric atoms on the alpha-covering.

Atom spectra are

    phi^_{k,l}(xi) = theta_k(xi) (2 a r_k)^{-n/2} 1_{[-a,a]^n}(xi/r_k - k) exp(-i x_{k,l} . (xi - xi_k))

so ``phi_{k,l}`` is concentrated around ``x_{k,l}`` and the family is a tight
frame with constant 1.  Coefficients for one k and all l are computed at once
by a separable chirp-z transform over the support box of ``theta_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import czt

from .bapu import BapuSystem, FreqBlock
from .coeffs import CoeffField, Layout
from .errors import DimensionMismatch, IndexOutOfTruncation
from .grid import Grid, SampledSignal
from .lattice import TFIndex, as_index, outer_half_width


@dataclass
class _KBlock:
    start: tuple
    shape: tuple
    profile: np.ndarray  # theta_k (2 a r_k)^{-n/2} on the box, real
    xi_lo: np.ndarray  # first box frequency per axis
    xi_k: np.ndarray
    dx: float  # lattice step pi/(a r_k)
    ell_lo: int
    count: int

    def slices(self) -> tuple:
        return tuple(slice(s, s + m) for s, m in zip(self.start, self.shape))


class TightFrame:
    """Truncated tight frame ``{phi_{k,l}}`` realised on a sampling grid."""

    def __init__(self, system: BapuSystem, grid: Grid, reach_factor: float = 1.25):
        g = system.geometry
        if grid.dim != g.dim:
            raise DimensionMismatch("grid and geometry dimensions differ")
        grid.check_reach(outer_half_width(g, system.truncation), reach_factor)
        self.system = system
        self.grid = grid
        self.geometry = g
        self.truncation = system.truncation
        self.layout = Layout.build(g, system.truncation)
        self._blocks: list[_KBlock | None] = [None] * len(self.layout.ks)

    # -- per-k data -------------------------------------------------------------
    def kblock(self, i: int) -> _KBlock:
        blk = self._blocks[i]
        if blk is None:
            g, grid = self.geometry, self.grid
            k = self.layout.ks[i]
            kk = k.astype(float)
            r = float(g.r(kk))
            th = self.system.theta_block(k, grid)
            prof = th.values * (2.0 * g.a * r) ** (-g.dim / 2.0)
            xi_lo = (np.asarray(th.start) - grid.N // 2) * grid.dxi
            blk = _KBlock(
                start=th.start,
                shape=th.shape,
                profile=prof,
                xi_lo=xi_lo,
                xi_k=g.xi(kk),
                dx=math.pi / (g.a * r),
                ell_lo=int(self.layout.ell_lo[i]),
                count=int(self.layout.ell_count[i]),
            )
            self._blocks[i] = blk
        return blk

    def _axis_exponential(self, blk: _KBlock, d: int, box_range: tuple | None = None) -> np.ndarray:
        """``E[u, t] = exp(-i x_t (xi_u - xi_k))`` on (a sub-range of) box axis d."""
        u0, u1 = box_range if box_range is not None else (0, blk.shape[d])
        xi = blk.xi_lo[d] + self.grid.dxi * np.arange(u0, u1) - blk.xi_k[d]
        x = blk.dx * (blk.ell_lo + np.arange(blk.count))
        return np.exp(-1j * np.outer(xi, x))

    # -- analysis / synthesis kernel -------------------------------------------
    def _analyze_block(self, blk: _KBlock, fhat_box: np.ndarray) -> np.ndarray:
        dxi = self.grid.dxi
        s = dxi * blk.dx
        out = fhat_box * blk.profile
        for d in range(self.geometry.dim):
            out = czt(out, blk.count, w=np.exp(1j * s), a=np.exp(-1j * blk.ell_lo * s), axis=d)
            x = blk.dx * (blk.ell_lo + np.arange(blk.count))
            ph = np.exp(1j * x * (blk.xi_lo[d] - blk.xi_k[d]))
            out = out * ph.reshape((-1,) + (1,) * (self.geometry.dim - 1 - d))
        return out * dxi**self.geometry.dim

    def _synthesize_block(self, blk: _KBlock, coeffs: np.ndarray) -> np.ndarray:
        dxi = self.grid.dxi
        s = dxi * blk.dx
        out = np.asarray(coeffs, dtype=complex)
        for d in range(self.geometry.dim):
            x = blk.dx * (blk.ell_lo + np.arange(blk.count))
            ph = np.exp(-1j * x * (blk.xi_lo[d] - blk.xi_k[d]))
            shp = (-1,) + (1,) * (self.geometry.dim - 1 - d)
            out = out * ph.reshape(shp)
            out = czt(out, blk.shape[d], w=np.exp(-1j * s), a=1.0, axis=d)
            out = out * np.exp(-1j * blk.ell_lo * s * np.arange(blk.shape[d])).reshape(shp)
        return out * blk.profile

    def analyze_spectrum(self, fhat: np.ndarray) -> CoeffField:
        data = np.empty(self.layout.size, dtype=complex)
        for i in range(len(self.layout.ks)):
            blk = self.kblock(i)
            c = self._analyze_block(blk, fhat[blk.slices()])
            data[self.layout.offsets[i] : self.layout.offsets[i + 1]] = c.ravel()
        return CoeffField(self.layout, data)

    def analyze(self, f: SampledSignal) -> CoeffField:
        """Coefficients ``<f, phi_{k,l}>`` for every truncated index."""
        if f.grid != self.grid:
            raise DimensionMismatch(f"signal grid {f.grid} differs from frame grid {self.grid}")
        return self.analyze_spectrum(f.spectrum())

    def synthesize_spectrum(self, c: CoeffField) -> np.ndarray:
        if not c.layout.same_as(self.layout):
            raise DimensionMismatch("coefficient layout does not match the frame")
        spec = np.zeros(self.grid.shape, dtype=complex)
        for i in range(len(self.layout.ks)):
            blk = self.kblock(i)
            b = c.block(i)
            if not np.any(b):
                continue
            spec[blk.slices()] += self._synthesize_block(blk, b)
        return spec

    def synthesize(self, c: CoeffField) -> SampledSignal:
        """``sum_{k,l} c_{k,l} phi_{k,l}``."""
        return SampledSignal.from_spectrum(self.grid, self.synthesize_spectrum(c))

    # -- single atoms -------------------------------------------------------------
    def _locate(self, kl) -> tuple[int, np.ndarray]:
        k, ell = as_index(kl[0]), np.asarray(as_index(kl[1]))
        i = self.layout.kpos(k)
        if len(ell) != self.geometry.dim:
            raise IndexOutOfTruncation(f"translation index {tuple(ell)} has wrong length")
        t = ell - self.layout.ell_lo[i]
        if np.any(t < 0) or np.any(t >= self.layout.ell_count[i]):
            raise IndexOutOfTruncation(f"translation index {tuple(ell)} outside the range of k={k}")
        return i, ell

    def atom_freq(self, kl) -> FreqBlock:
        """Spectrum of ``phi_{k,l}`` on the support box of theta_k."""
        i, ell = self._locate(kl)
        blk = self.kblock(i)
        x = blk.dx * ell
        val = blk.profile.astype(complex)
        for d in range(self.geometry.dim):
            xi = blk.xi_lo[d] + self.grid.dxi * np.arange(blk.shape[d]) - blk.xi_k[d]
            ph = np.exp(-1j * x[d] * xi)
            val = val * ph.reshape((-1,) + (1,) * (self.geometry.dim - 1 - d))
        return FreqBlock(blk.start, val)

    def atom_spectrum(self, kl) -> np.ndarray:
        """Zero-extended spectrum of ``phi_{k,l}`` on the whole frequency grid."""
        fb = self.atom_freq(kl)
        spec = np.zeros(self.grid.shape, dtype=complex)
        spec[fb.slices()] = fb.values
        return spec

    def atom_space(self, kl) -> SampledSignal:
        """Samples of ``phi_{k,l}`` on the space grid."""
        return SampledSignal.from_spectrum(self.grid, self.atom_spectrum(kl))

    def atom_norm_sq(self, kl) -> float:
        fb = self.atom_freq(kl)
        return float(self.grid.dxi**self.geometry.dim * np.sum(np.abs(fb.values) ** 2))

    def family(self, indices) -> "AtomFamily":
        idx = [TFIndex(as_index(k), as_index(l)) for k, l in indices]
        spectra = np.stack([self.atom_spectrum(kl).ravel() for kl in idx])
        space = self.grid.inverse(spectra.reshape((len(idx),) + self.grid.shape)).reshape(len(idx), -1)
        return AtomFamily(self.grid, self.geometry, idx, space, spectra)

    def block_spectra(self, i: int) -> np.ndarray:
        """Spectra of all atoms of block i on its support box, (count^n,) + box shape."""
        blk = self.kblock(i)
        n = self.geometry.dim
        ph = np.ones((), dtype=complex)
        for d in range(n):
            ph = np.multiply.outer(ph, self._axis_exponential(blk, d).T)  # axes (l_1, u_1, ..., l_d, u_d)
        ph = np.transpose(ph, [2 * d for d in range(n)] + [2 * d + 1 for d in range(n)])
        return (ph * blk.profile).reshape((blk.count**n,) + blk.shape)

    def space_matrix(self) -> np.ndarray:
        """All atoms sampled in space, (layout.size, N^n) dense."""
        grid, n = self.grid, self.geometry.dim
        out = np.empty((self.layout.size, grid.N**n), dtype=complex)
        for i in range(len(self.layout.ks)):
            blk = self.kblock(i)
            spec = np.zeros((self.layout.offsets[i + 1] - self.layout.offsets[i],) + grid.shape, dtype=complex)
            spec[(slice(None),) + blk.slices()] = self.block_spectra(i)
            out[self.layout.offsets[i] : self.layout.offsets[i + 1]] = grid.inverse(spec).reshape(len(spec), -1)
        return out

    # -- pair blocks (Gram / multiplier matrices) --------------------------------
    def overlapping_pairs(self) -> list[tuple[int, int]]:
        """(row block j, column block k) with intersecting support boxes."""
        K = len(self.layout.ks)
        lo = np.array([self.kblock(i).start for i in range(K)])
        hi = lo + np.array([self.kblock(i).shape for i in range(K)])
        out = []
        for j in range(K):
            ok = np.all((lo < hi[j]) & (hi > lo[j]), axis=1)
            out.extend((j, int(k)) for k in np.flatnonzero(ok))
        return out

    def pair_block(self, j: int, k: int, symbol: np.ndarray | None = None) -> np.ndarray:
        """Dense block ``[<m(D) phi_{k,l}, phi_{j,m}>]_{m,l}`` (rows: block j).

        ``symbol`` holds multiplier values on the whole frequency grid (None
        means the identity, i.e. the Gram block).
        """
        bj, bk = self.kblock(j), self.kblock(k)
        n = self.geometry.dim
        lo = np.maximum(bj.start, bk.start)
        hi = np.minimum(np.add(bj.start, bj.shape), np.add(bk.start, bk.shape))
        if np.any(hi <= lo):
            return np.zeros((bj.count**n, bk.count**n), dtype=complex)
        sj = tuple(slice(a - s, b - s) for a, b, s in zip(lo, hi, bj.start))
        sk = tuple(slice(a - s, b - s) for a, b, s in zip(lo, hi, bk.start))
        W = bj.profile[sj] * bk.profile[sk]
        if symbol is not None:
            W = W * symbol[tuple(slice(a, b) for a, b in zip(lo, hi))]
        X = W.astype(complex) * self.grid.dxi**n
        for d in range(n):
            Ej = self._axis_exponential(bj, d, (lo[d] - bj.start[d], hi[d] - bj.start[d]))
            Ek = self._axis_exponential(bk, d, (lo[d] - bk.start[d], hi[d] - bk.start[d]))
            X = np.einsum("b...,bm,bl->...ml", X, Ej.conj(), Ek, optimize=True)
        # X axes: (m_1, l_1, ..., m_n, l_n)
        perm = [2 * d for d in range(n)] + [2 * d + 1 for d in range(n)]
        X = np.transpose(X, perm)
        return X.reshape(bj.count**n, bk.count**n)


@dataclass
class AtomFamily:
    """Atoms sampled in both domains on a common grid (rows = atoms)."""

    grid: Grid
    geometry: object
    indices: list
    space: np.ndarray  # (A, N^n)
    spectra: np.ndarray  # (A, N^n)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class MoleculeCert:
    """Fitted envelope constants of an atom family."""

    M: float
    N: float
    C_M: float
    K_N: float
    per_atom: np.ndarray | None = None

    def to_json(self) -> dict:
        return {"M": self.M, "N": self.N, "C_M": float(self.C_M), "K_N": float(self.K_N)}


def torus_diff(x: np.ndarray, centre: np.ndarray, T: float) -> np.ndarray:
    """Minimum-image difference ``x - centre`` on the torus ``[-T, T)^n``."""
    d = x - centre
    return d - 2.0 * T * np.round(d / (2.0 * T))


def envelope_fit(family: AtomFamily, M: float, N: float) -> MoleculeCert:
    """Fit the space (order M) and frequency (order N) decay constants.

    ``C_M = max |psi(x)| (2a)^{n/2} r^{-n/2} (1 + r|x - x_{k,l}|)^M`` and
    ``K_N = max |psi^(xi)| r^{n/2} (1 + |xi - xi_k|/r)^N``.
    """
    grid, g = family.grid, family.geometry
    n = grid.dim
    X = grid.coords().reshape(-1, n)
    XI = grid.freqs().reshape(-1, n)
    per = np.zeros((len(family), 2))
    for a_i, (kl, sv, fv) in enumerate(zip(family.indices, family.space, family.spectra)):
        k = np.asarray(kl[0], dtype=float)
        r = float(g.r(k))
        xc = g.x(k, np.asarray(kl[1], dtype=float))
        dist = np.sqrt(np.sum(torus_diff(X, xc, grid.T) ** 2, axis=-1))
        per[a_i, 0] = np.max(np.abs(sv) * (2 * g.a) ** (n / 2) * r ** (-n / 2) * (1 + r * dist) ** M)
        dxi = np.sqrt(np.sum((XI - g.xi(k)) ** 2, axis=-1))
        per[a_i, 1] = np.max(np.abs(fv) * r ** (n / 2) * (1 + dxi / r) ** N)
    return MoleculeCert(M, N, float(per[:, 0].max()), float(per[:, 1].max()), per)


def exponential_family(grid: Grid, geometry, indices) -> AtomFamily:
    """Negative control: un-windowed exponentials ``r^{n/2}(2a)^{-n/2} e^{i x.xi_k}`` on the box."""
    X = grid.coords().reshape(-1, grid.dim)
    rows = []
    for k, _ in indices:
        kk = np.asarray(k, dtype=float)
        r = float(geometry.r(kk))
        rows.append(r ** (grid.dim / 2) * (2 * geometry.a) ** (-grid.dim / 2) * np.exp(1j * X @ geometry.xi(kk)))
    space = np.stack(rows)
    spectra = grid.fourier(space.reshape((len(rows),) + grid.shape)).reshape(len(rows), -1)
    idx = [TFIndex(as_index(k), as_index(l)) for k, l in indices]
    return AtomFamily(grid, geometry, idx, space, spectra)


@dataclass
class TightFrameReport:
    parseval_err: float
    recon_err: float

    def to_json(self) -> dict:
        return {"parseval_err": float(self.parseval_err), "recon_err": float(self.recon_err)}


def tight_frame_check(frame: TightFrame, panel) -> TightFrameReport:
    """Worst Parseval and reconstruction errors over a panel of signals."""
    pe, re = 0.0, 0.0
    for f in panel:
        nf = f.norm()
        c = frame.analyze(f)
        if nf == 0:
            if c.l2() != 0:
                pe = math.inf
            continue
        pe = max(pe, abs(c.l2() ** 2 - nf**2) / nf**2)
        re = max(re, (frame.synthesize(c) - f).norm() / nf)
    return TightFrameReport(pe, re)


def check_kl(frame: TightFrame, kl) -> TFIndex:
    """Validate an index against the frame's truncation."""
    i, ell = frame._locate(kl)
    return TFIndex(as_index(frame.layout.ks[i]), as_index(ell))


__all__ = [
    "TightFrame",
    "AtomFamily",
    "MoleculeCert",
    "TightFrameReport",
    "envelope_fit",
    "exponential_family",
    "tight_frame_check",
    "torus_diff",
]
