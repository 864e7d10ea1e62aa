"""Almost-diagonal matrices on the (k, l) lattice.

Matrices are scipy sparse matrices whose rows and columns are indexed by
coefficient :class:`~amspec.coeffs.Layout` objects.  The module provides the
almost-diagonal weight, membership fitting, composition, the action on
coefficient fields, Gram matrices of atom families and numerical checks of
the molecule / summability / maximal-sum estimates.

Distances between space lattice points are measured on the sampling torus
``[-T, T)^n`` (minimum image) whenever a period is supplied, because atoms
realised on a periodic grid wrap around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps

from .coeffs import CoeffField, Layout
from .errors import DimensionMismatch, PreconditionError
from .frame import TightFrame
from .grid import Grid
from .lattice import AlphaGeometry, Truncation, as_index, bracket
from .mixednorm import PVec, iterated_max
from .transform import SpaceParams, _raster_balls, seq_norm

DROP_TOL = 1e-14
STABILITY_TOL = 0.25


# -----------------------------------------------------------------------------
# parameters
# -----------------------------------------------------------------------------
def _fit_moderate_constants(alpha: float, beta: float, rho0: float, rho1: float, xi_max: float = 1e6) -> tuple[float, float]:
    """Smallest R0, R1 for which the two moderateness implications hold on a probe grid.

    ``h(xi) = <xi>^alpha`` is radial and monotone, so for every ``|xi|`` the
    extreme ratios are attained on the sphere ``|zeta| = |xi| +- radius``.
    """
    rad = np.concatenate([[0.0], np.geomspace(1e-3, xi_max, 2000)])
    h = lambda t: (1.0 + t * t) ** (alpha / 2.0)  # noqa: E731
    hb = lambda t: h(t) ** (1.0 + beta)  # noqa: E731
    d0 = rho0 * hb(rad)
    up = hb(rad + d0) / hb(rad)
    down = hb(rad) / hb(np.maximum(rad - d0, 0.0))
    R0 = float(max(up.max(), down.max()))
    avals = np.geomspace(rho1, 1e4 * rho1, 200)
    A, Rr = np.meshgrid(avals, rad, indexing="ij")
    R1 = float(np.max(h(Rr + A * h(Rr)) / (A * h(Rr))))
    return R0, R1


@dataclass(frozen=True)
class AdParams:
    """Parameters of the almost-diagonal class (and its moderate-weight constants)."""

    s: float
    alpha: float
    p: PVec
    delta: float
    beta: float
    rho0: float
    rho1: float
    R0: float
    R1: float

    def __init__(self, s: float, alpha: float, p: PVec | Sequence[float], delta: float = 1.0, beta: float | None = None,
                 q: float | None = None, rho0: float = 0.5, rho1: float = 1.0):
        pv = p if isinstance(p, PVec) else PVec(p, q if q is not None else 2.0)
        if not (0.0 <= alpha < 1.0):
            raise PreconditionError(f"alpha must lie in [0,1), got {alpha}")
        if not delta > 0:
            raise PreconditionError("delta must be positive")
        if beta is None:
            beta = 1.0 if alpha == 0 else min(1.0, (1.0 - alpha) / alpha)
        if not beta > 0 or alpha * (1.0 + beta) > 1.0 + 1e-12:
            raise PreconditionError(f"beta={beta} must be positive with alpha (1 + beta) <= 1")
        R0, R1 = _fit_moderate_constants(alpha, beta, rho0, rho1)
        R0b, R1b = _fit_moderate_constants(alpha, beta, rho0, rho1, xi_max=1e3)
        if R0 > 1.01 * R0b or R1 > 1.01 * R1b:
            raise PreconditionError(f"moderate-weight constants do not settle (R0 {R0b:.3g} -> {R0:.3g}); decrease rho0")
        for name, val in [("s", float(s)), ("alpha", float(alpha)), ("p", pv), ("delta", float(delta)),
                          ("beta", float(beta)), ("rho0", float(rho0)), ("rho1", float(rho1)), ("R0", R0), ("R1", R1)]:
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.p.dim

    @property
    def J(self) -> float:
        return self.p.J

    def with_delta(self, delta: float) -> "AdParams":
        return AdParams(self.s, self.alpha, self.p, delta, self.beta, rho0=self.rho0, rho1=self.rho1)

    def to_json(self) -> dict:
        return {"s": self.s, "alpha": self.alpha, "p": list(self.p.p), "q": self.p.q, "delta": self.delta,
                "beta": self.beta, "J": self.J, "rho0": self.rho0, "rho1": self.rho1, "R0": self.R0, "R1": self.R1}


# -----------------------------------------------------------------------------
# weights
# -----------------------------------------------------------------------------
def _xdist(dx: np.ndarray, period: float | None) -> np.ndarray:
    if period is not None:
        dx = dx - 2.0 * period * np.round(dx / (2.0 * period))
    return np.sqrt(np.sum(dx * dx, axis=-1))


def weight_arrays(rj, xij, xjm, rk, xik, xkn, par: AdParams, period: float | None = None, delta: float | None = None):
    """Vectorised almost-diagonal weight ``w^{s,delta}_{(j,m)(k,n)}``."""
    d = par.delta if delta is None else delta
    J = par.J
    n = par.dim
    ratio = rk / rj
    scale = ratio ** (par.s + n / 2.0)
    damp = np.minimum(ratio ** (-(J + d / 2.0)), ratio ** (d / 2.0))
    cjk = np.minimum(ratio ** (-(J + d)), ratio**d) * (
        1.0 + np.sqrt(np.sum((xik - xij) ** 2, axis=-1)) / np.maximum(rk, rj)
    ) ** (-J - d)
    space = (1.0 + np.minimum(rk, rj) * _xdist(xkn - xjm, period)) ** (-J - d)
    return scale * damp * cjk * space


def weight(jm, kn, par: AdParams, geom: AlphaGeometry, period: float | None = None, delta: float | None = None) -> float:
    """``w^{s,delta}`` between the lattice points ``(j,m)`` (row) and ``(k,n)`` (column)."""
    if geom.dim != par.dim or geom.alpha != par.alpha:
        raise PreconditionError("geometry and parameters disagree on dimension or alpha")
    j, m = (np.asarray(as_index(v), dtype=float) for v in jm)
    k, l = (np.asarray(as_index(v), dtype=float) for v in kn)
    return float(
        weight_arrays(geom.r(j), geom.xi(j), geom.x(j, m), geom.r(k), geom.xi(k), geom.x(k, l), par, period, delta)
    )


# -----------------------------------------------------------------------------
# matrices
# -----------------------------------------------------------------------------
@dataclass
class OpMatrix:
    """Sparse matrix with rows over ``row_layout`` and columns over ``col_layout``."""

    mat: sps.csr_matrix
    row_layout: Layout
    col_layout: Layout

    def __post_init__(self):
        self.mat = sps.csr_matrix(self.mat, dtype=complex)
        if self.mat.shape != (self.row_layout.size, self.col_layout.size):
            raise DimensionMismatch(f"matrix shape {self.mat.shape} does not match its layouts")

    @classmethod
    def identity(cls, layout: Layout) -> "OpMatrix":
        return cls(sps.identity(layout.size, dtype=complex, format="csr"), layout, layout)

    @classmethod
    def zeros(cls, layout: Layout) -> "OpMatrix":
        return cls(sps.csr_matrix((layout.size, layout.size), dtype=complex), layout, layout)

    @classmethod
    def ones(cls, layout: Layout) -> "OpMatrix":
        return cls(sps.csr_matrix(np.ones((layout.size, layout.size), dtype=complex)), layout, layout)

    def __mul__(self, c: complex) -> "OpMatrix":
        return OpMatrix(self.mat * c, self.row_layout, self.col_layout)

    __rmul__ = __mul__

    def __sub__(self, other: "OpMatrix") -> "OpMatrix":
        _same(self.row_layout, other.row_layout)
        _same(self.col_layout, other.col_layout)
        return OpMatrix(self.mat - other.mat, self.row_layout, self.col_layout)

    def __add__(self, other: "OpMatrix") -> "OpMatrix":
        _same(self.row_layout, other.row_layout)
        _same(self.col_layout, other.col_layout)
        return OpMatrix(self.mat + other.mat, self.row_layout, self.col_layout)

    def conj_transpose(self) -> "OpMatrix":
        return OpMatrix(self.mat.conj().T.tocsr(), self.col_layout, self.row_layout)

    def entry(self, jm, kn) -> complex:
        return complex(self.mat[self.row_layout.flat(jm), self.col_layout.flat(kn)])

    def restricted_to(self, row_layout: Layout, col_layout: Layout) -> "OpMatrix":
        """Sub-matrix on smaller layouts (every index of the target must exist here)."""
        rows = _embed(row_layout, self.row_layout)
        cols = _embed(col_layout, self.col_layout)
        return OpMatrix(self.mat[rows][:, cols], row_layout, col_layout)

    def save_csv(self, path) -> None:
        """CSV ``j..,m..,k..,n..,re,im`` (flattened multi-indices)."""
        n = self.row_layout.dim
        coo = self.mat.tocoo()
        rl, cl = self.row_layout, self.col_layout
        J = rl.ks[rl.k_of[coo.row]]
        M = rl.ell_of[coo.row]
        K = cl.ks[cl.k_of[coo.col]]
        L = cl.ell_of[coo.col]
        hdr = ",".join([f"j{i+1}" for i in range(n)] + [f"m{i+1}" for i in range(n)] + [f"k{i+1}" for i in range(n)]
                       + [f"n{i+1}" for i in range(n)] + ["re", "im"])
        data = np.column_stack([J, M, K, L, coo.data.real, coo.data.imag])
        fmt = ["%d"] * (4 * n) + ["%.17g", "%.17g"]
        np.savetxt(path, data, delimiter=",", header=hdr, comments="", fmt=fmt)


def _same(a: Layout, b: Layout) -> None:
    if not a.same_as(b):
        raise DimensionMismatch("operands live on different index sets")


def _embed(small: Layout, big: Layout) -> np.ndarray:
    """Flat positions in ``big`` of every index of ``small``."""
    out = np.empty(small.size, dtype=np.int64)
    for i, k in enumerate(small.ks):
        bi = big.kpos(k)
        ells = small.ells(i) - big.ell_lo[bi]
        if np.any(ells < 0) or np.any(ells >= big.ell_count[bi]):
            raise DimensionMismatch("target layout is not contained in the source layout")
        pos = np.ravel_multi_index(tuple(ells.T), big.block_shape(bi))
        out[small.offsets[i] : small.offsets[i + 1]] = big.offsets[bi] + pos
    return out


def entry_weights(A: OpMatrix, par: AdParams, periodic: bool = True, delta: float | None = None):
    """(|a|, weight) for every stored entry of A."""
    coo = A.mat.tocoo()
    rl, cl = A.row_layout, A.col_layout
    period = rl.truncation.T if periodic else None
    g = rl.geometry
    kr = rl.ks.astype(float)
    kc = cl.ks.astype(float)
    rr, xir = g.r(kr), g.xi(kr)
    rc, xic = cl.geometry.r(kc), cl.geometry.xi(kc)
    bi, bk = rl.k_of[coo.row], cl.k_of[coo.col]
    xjm = g.x(kr[bi], rl.ell_of[coo.row].astype(float))
    xkn = cl.geometry.x(kc[bk], cl.ell_of[coo.col].astype(float))
    w = weight_arrays(rr[bi], xir[bi], xjm, rc[bk], xic[bk], xkn, par, period, delta)
    return np.abs(coo.data), w


@dataclass
class MembershipReport:
    member: bool
    C: float
    C_doubled: float | None = None

    def to_json(self) -> dict:
        return {"member": bool(self.member), "fitted_C": float(self.C),
                "fitted_C_doubled": None if self.C_doubled is None else float(self.C_doubled)}


def fitted_constant(A: OpMatrix, par: AdParams, delta: float | None = None) -> float:
    """``max |a| / w`` over the stored entries (0 for the zero matrix)."""
    a, w = entry_weights(A, par, delta=delta)
    return float(np.max(a / w)) if a.size else 0.0


def is_almost_diagonal(A: OpMatrix, par: AdParams, doubled: OpMatrix | None = None, tol: float = STABILITY_TOL) -> MembershipReport:
    """Fit ``C = max |a|/w``; membership needs C finite and, when the matrix at
    the doubled truncation is supplied, ``C`` stable within ``tol``."""
    C = fitted_constant(A, par)
    if not math.isfinite(C):
        return MembershipReport(False, C)
    if doubled is None:
        return MembershipReport(True, C)
    C2 = fitted_constant(doubled, par)
    stable = math.isfinite(C2) and (C == C2 or abs(C2 - C) <= tol * max(C, 1e-300))
    return MembershipReport(bool(stable), C, C2)


def compose(A: OpMatrix, B: OpMatrix) -> OpMatrix:
    """Matrix product ``A B`` (column layout of A must equal the row layout of B)."""
    _same(A.col_layout, B.row_layout)
    return OpMatrix(A.mat @ B.mat, A.row_layout, B.col_layout)


def apply(A: OpMatrix, c: CoeffField) -> CoeffField:
    """Matrix-vector action ``(A c)_{(j,m)} = sum a_{(j,m)(k,n)} c_{(k,n)}``."""
    _same(A.col_layout, c.layout)
    return CoeffField(A.row_layout, A.mat @ c.data)


def bounded_action_check(A: OpMatrix, sp: SpaceParams, panel, grid: Grid) -> float:
    """``max seq_norm(A c) / seq_norm(c)`` over a panel of coefficient fields."""
    best = 0.0
    for c in panel:
        den = seq_norm(c, sp, grid)
        if den == 0:
            continue
        best = max(best, seq_norm(apply(A, c), sp, grid) / den)
    return best


def random_field_panel(layout: Layout, count: int, seed: int = 0, kmax_active: int | None = None, density: float = 0.02,
                       ell_box: float | None = None) -> list:
    """Random sparse coefficient fields (entries only at ``|k| <= kmax_active`` and ``|x_{k,l}| <= ell_box``)."""
    rng = np.random.default_rng(seed)
    g = layout.geometry
    kk = layout.ks[layout.k_of]
    ok = np.ones(layout.size, dtype=bool)
    if kmax_active is not None:
        ok &= np.max(np.abs(kk), axis=1) <= kmax_active
    if ell_box is not None:
        ok &= np.max(np.abs(layout.x_of()), axis=1) <= ell_box
    cand = np.flatnonzero(ok)
    out = []
    for _ in range(count):
        pick = cand[rng.random(len(cand)) < density]
        if len(pick) == 0:
            pick = cand[rng.integers(len(cand), size=1)]
        data = np.zeros(layout.size, dtype=complex)
        data[pick] = rng.standard_normal(len(pick)) + 1j * rng.standard_normal(len(pick))
        out.append(CoeffField(layout, data))
    return out


# -----------------------------------------------------------------------------
# Gram matrices
# -----------------------------------------------------------------------------
def frame_matrix(frame: TightFrame, symbol: np.ndarray | None = None, drop_tol: float = DROP_TOL) -> OpMatrix:
    """``[<m(D) phi_{k,l}, phi_{j,m}>]`` assembled block by block (rows (j,m)).

    Blocks are structurally zero unless the supports of theta_j and theta_k
    intersect; inside a block, entries below ``drop_tol`` times the largest
    entry of the whole matrix are round-off and are not stored.
    """
    lay = frame.layout
    rows, cols, vals = [], [], []
    peak = 0.0
    for j, k in frame.overlapping_pairs():
        B = frame.pair_block(j, k, symbol)
        peak = max(peak, float(np.max(np.abs(B))) if B.size else 0.0)
        r, c = np.nonzero(B)
        rows.append(lay.offsets[j] + r)
        cols.append(lay.offsets[k] + c)
        vals.append(B[r, c])
    if not rows:
        return OpMatrix.zeros(lay)
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    keep = np.abs(vals) >= drop_tol * peak
    mat = sps.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(lay.size, lay.size))
    return OpMatrix(mat, lay, lay)


def gram(family1, family2=None, drop_tol: float = DROP_TOL) -> OpMatrix:
    """Gram / change-of-frame matrix ``[<eta_{k,l}, psi_{j,m}>]`` (rows: family2).

    ``family1 = eta`` and ``family2 = psi``.  Two references to the same
    :class:`TightFrame` use the sparse frequency-domain block path; otherwise
    each family must expose ``layout``, ``grid`` and ``space_matrix()``
    (atoms x samples, dense or sparse) and direct-space quadrature is used.
    """
    if family2 is None:
        family2 = family1
    if isinstance(family1, TightFrame) and family1 is family2:
        return frame_matrix(family1, None, drop_tol)
    g1, g2 = family1.grid, family2.grid
    if g1 != g2:
        raise DimensionMismatch("families live on different grids")
    A1 = family1.space_matrix()
    A2 = family2.space_matrix()
    h = g1.h ** g1.dim
    G = h * (_conj(A2) @ _transpose(A1))
    G = sps.csr_matrix(G)
    peak = np.max(np.abs(G.data)) if G.nnz else 0.0
    G.data[np.abs(G.data) < drop_tol * peak] = 0
    G.eliminate_zeros()
    return OpMatrix(G, family2.layout, family1.layout)


def _conj(A):
    return A.conj()


def _transpose(A):
    return A.T


@dataclass
class GramDecayReport:
    C_molecule: float
    C_direct: float

    def to_json(self) -> dict:
        return {"fitted_C": float(self.C_molecule), "fitted_C_direct": float(self.C_direct)}


def gram_decay_check(G: OpMatrix, M: float, N: float, L: float, N_direct: float | None = None,
                     periodic: bool = True) -> GramDecayReport:
    """Fit the molecule Gram envelope and the pure direct-space envelope.

    ``C = max |G| / [min(r_k/r_j, r_j/r_k)^{n/2+L} (1+|xi_k-xi_j|/max r)^{-M} (1+min r |x_{k,l}-x_{j,m}|)^{-N}]``;
    the direct-space fit drops the frequency factor, uses exponent ``n/2`` on
    the scale ratio and ``N_direct`` (default ``2N``) on the space factor.
    """
    coo = G.mat.tocoo()
    rl, cl = G.row_layout, G.col_layout
    g = rl.geometry
    n = g.dim
    period = rl.truncation.T if periodic else None
    kr, kc = rl.ks.astype(float), cl.ks.astype(float)
    bi, bk = rl.k_of[coo.row], cl.k_of[coo.col]
    rj, rk = g.r(kr)[bi], g.r(kc)[bk]
    dxi = np.sqrt(np.sum((g.xi(kr)[bi] - g.xi(kc)[bk]) ** 2, axis=-1))
    xjm = g.x(kr[bi], rl.ell_of[coo.row].astype(float))
    xkn = g.x(kc[bk], cl.ell_of[coo.col].astype(float))
    dx = _xdist(xkn - xjm, period)
    mr = np.minimum(rk / rj, rj / rk)
    a = np.abs(coo.data)
    env = mr ** (n / 2 + L) * (1 + dxi / np.maximum(rk, rj)) ** (-M) * (1 + np.minimum(rk, rj) * dx) ** (-N)
    Nd = 2 * N if N_direct is None else N_direct
    env_d = mr ** (n / 2) * (1 + np.minimum(rk, rj) * dx) ** (-Nd)
    if a.size == 0:
        return GramDecayReport(0.0, 0.0)
    return GramDecayReport(float(np.max(a / env)), float(np.max(a / env_d)))


# -----------------------------------------------------------------------------
# lattice-sum certificates
# -----------------------------------------------------------------------------
def _probe_pairs(layout: Layout, kmax_probe: int, per_shell: int, seed: int) -> list[tuple[int, int]]:
    """Deterministic stratified (row, column) flat positions by |k - j|_inf shell."""
    rng = np.random.default_rng(seed)
    g = layout.geometry
    ks = layout.ks
    small = np.flatnonzero(np.max(np.abs(ks), axis=1) <= kmax_probe)
    pairs = []
    for shell in range(0, 2 * kmax_probe + 1):
        cand = [(a, b) for a in small for b in small if np.max(np.abs(ks[a] - ks[b])) == shell]
        if not cand:
            continue
        pick = rng.choice(len(cand), size=min(per_shell, len(cand)), replace=False)
        for t in pick:
            a, b = cand[t]
            # translation indices near the centre of each block plus a random offset
            la = layout.ell_lo[a] + layout.ell_count[a] // 2 + rng.integers(-2, 3, size=g.dim)
            lb = layout.ell_lo[b] + layout.ell_count[b] // 2 + rng.integers(-2, 3, size=g.dim)
            pairs.append((layout.flat((ks[a], la)), layout.flat((ks[b], lb))))
    return pairs


def closure_constant(par: AdParams, layout: Layout, pairs: list[tuple[int, int]], periodic: bool = False) -> float:
    """``max_{pairs} sum_{(i,l)} w^d_{(j,m)(i,l)} w^d_{(i,l)(k,n)} / w^{d/2}_{(j,m)(k,n)}``."""
    g = layout.geometry
    period = layout.truncation.T if periodic else None
    r_all, xi_all, x_all = layout.r_of(), layout.xi_of(), layout.x_of()
    best = 0.0
    for a, b in pairs:
        left = weight_arrays(r_all[a], xi_all[a], x_all[a], r_all, xi_all, x_all, par, period)
        right = weight_arrays(r_all, xi_all, x_all, r_all[b], xi_all[b], x_all[b], par, period)
        den = weight_arrays(r_all[a], xi_all[a], x_all[a], r_all[b], xi_all[b], x_all[b], par, period, par.delta / 2)
        best = max(best, float(np.sum(left * right) / den))
    return best


@dataclass
class StabilityReport:
    fitted_C: float
    fitted_C_doubled: float
    truncations: tuple
    tol: float

    @property
    def stable(self) -> bool:
        return bool(abs(self.fitted_C_doubled - self.fitted_C) <= self.tol * self.fitted_C)

    def to_json(self) -> dict:
        return {"fitted_C": float(self.fitted_C), "fitted_C_doubled": float(self.fitted_C_doubled),
                "truncations": list(self.truncations), "stable": self.stable}


def composition_closure_check(par: AdParams, geom: AlphaGeometry, trunc: Truncation, per_shell: int = 3,
                              seed: int = 0, tol: float = STABILITY_TOL) -> StabilityReport:
    """Closure constant at ``trunc`` and at the doubled truncation on the same probe pairs."""
    if geom.dim != par.dim:
        raise DimensionMismatch("geometry and parameters differ in dimension")
    lay = Layout.build(geom, trunc)
    lay2 = Layout.build(geom, trunc.doubled())
    pairs = _probe_pairs(lay, max(1, trunc.kmax // 2), per_shell, seed)
    emb = _embed(lay, lay2)
    pairs2 = [(int(emb[a]), int(emb[b])) for a, b in pairs]
    C1 = closure_constant(par, lay, pairs)
    C2 = closure_constant(par, lay2, pairs2)
    return StabilityReport(C1, C2, (trunc.kmax, 2 * trunc.kmax), tol)


@dataclass
class SummabilityReport:
    Ca: float
    Cb: float

    def to_json(self) -> dict:
        return {"Ca": float(self.Ca), "Cb": float(self.Cb)}


def summability_check(alpha: float, dim: int, delta: float, kmax: int) -> SummabilityReport:
    """Row and column sups of ``min((r_j/r_k)^n, (r_k/r_j)^delta)(1+|xi_j-xi_k|/max r)^{-n-delta}``."""
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    geom = AlphaGeometry(alpha, dim, 1.0, max(2.0, math.pi * math.sqrt(dim) / 2))
    ks = Truncation(kmax, 1.0).freq_indices(dim).astype(float)
    r = geom.r(ks)
    xi = geom.xi(ks)
    Ca = 0.0
    Cb = 0.0
    chunk = max(1, (1 << 22) // len(ks))
    for s0 in range(0, len(ks), chunk):
        rk = r[s0 : s0 + chunk, None]
        dxi = np.sqrt(np.sum((xi[s0 : s0 + chunk, None, :] - xi[None, :, :]) ** 2, axis=-1))
        rj = r[None, :]
        mx = np.maximum(rk, rj)
        # (i): rows indexed by k, summed over j
        ta = np.minimum((rj / rk) ** dim, (rk / rj) ** delta) * (1 + dxi / mx) ** (-dim - delta)
        # (ii): rows indexed by j, summed over k (roles of the ratio swapped)
        tb = np.minimum((rk / rj) ** dim, (rj / rk) ** delta) * (1 + dxi / mx) ** (-dim - delta)
        Ca = max(Ca, float(ta.sum(axis=1).max()))
        Cb = max(Cb, float(tb.sum(axis=1).max()))
    return SummabilityReport(Ca, Cb)


def maxsum_check(geom: AlphaGeometry, trunc: Truncation, grid: Grid, trials: int, r: float = 1.0,
                 N_exp: float | None = None, seed: int = 0, density: float = 0.05, sequences: list | None = None) -> float:
    """Largest ratio of the lattice maximal-sum estimate over random trials.

    Each trial draws a frequency index k, a sparse sequence ``s_{k,l}`` and a
    row ``(j, m)``; the ratio is
    ``sum_l |s|/(1+min(r_k,r_j)|x_{k,l}-x_{j,m}|)^N`` divided by
    ``max(r_k/r_j, 1)^{n/r} M_r(sum_l |s| 1_{Q(k,l)})(x)`` maximised over
    grid points x of ``Q(j, m)``.
    """
    if not (0 < r <= 1):
        raise PreconditionError("r must lie in (0, 1]")
    n = geom.dim
    if N_exp is None:
        N_exp = n / r + 1.0
    if not N_exp > n / r:
        raise PreconditionError("N_exp must exceed n/r")
    lay = Layout.build(geom, trunc)
    rng = np.random.default_rng(seed)
    X = grid.coords().reshape(-1, n)
    best = 0.0
    for t in range(trials):
        if sequences is not None:
            ki, s_vals = sequences[t]
        else:
            ki = int(rng.integers(len(lay.ks)))
            cnt = lay.ell_count[ki] ** n
            s_vals = np.where(rng.random(cnt) < density, rng.standard_normal(cnt), 0.0)
        s_abs = np.abs(np.asarray(s_vals, dtype=float))
        k = lay.ks[ki].astype(float)
        rk = float(geom.r(k))
        ells = lay.ells(ki).astype(float)
        xk = geom.x(np.broadcast_to(k, ells.shape), ells)
        ji = int(rng.integers(len(lay.ks)))
        j = lay.ks[ji].astype(float)
        rj = float(geom.r(j))
        m = lay.ells(ji)[int(rng.integers(lay.ell_count[ji] ** n))].astype(float)
        xjm = geom.x(j, m)
        lhs = float(np.sum(s_abs / (1 + min(rk, rj) * np.sqrt(np.sum((xk - xjm) ** 2, axis=-1))) ** N_exp))
        if lhs == 0:
            continue
        nz = s_abs > 0
        F = _raster_balls(grid, -xk[nz], 1.0 / rk, s_abs[nz])
        MF = iterated_max(F, r).ravel()
        inq = np.sum((X + xjm) ** 2, axis=-1) <= (1.0 / rj) ** 2
        if not np.any(inq):
            inq = np.zeros(len(X), dtype=bool)
            inq[np.argmin(np.sum((X + xjm) ** 2, axis=-1))] = True
        rhs = max(rk / rj, 1.0) ** (n / r) * MF[inq]
        best = max(best, float(np.max(lhs / np.maximum(rhs, 1e-300))))
    return best


__all__ = [
    "AdParams",
    "OpMatrix",
    "weight",
    "weight_arrays",
    "is_almost_diagonal",
    "fitted_constant",
    "compose",
    "apply",
    "bounded_action_check",
    "random_field_panel",
    "gram",
    "frame_matrix",
    "gram_decay_check",
    "composition_closure_check",
    "closure_constant",
    "summability_check",
    "maxsum_check",
    "MembershipReport",
    "StabilityReport",
    "SummabilityReport",
    "GramDecayReport",
    "entry_weights",
]
