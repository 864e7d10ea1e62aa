"""Compactly supported perturbations of the tight frame.

Each envelope ``mu_k`` of the tight frame (``phi_{k,l}(x) = r_k^{n/2}
e^{i x.xi_k} mu_k(r_k x - pi l / a)``) is replaced by a finite combination
of dilated, shifted B-splines

    tau_k(y) = sum_i a_i g_m(y + b_i),      g_m(y) = m^n g(m y),

which has compact support.  The resulting family is stored as a sparse
atoms x samples matrix.  Frame-operator inversion uses the band-restricted
operator ``P S P`` where ``P`` keeps the frequencies of the interior box:
compactly supported atoms leak outside every band, so only the restricted
operator is close to the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.interpolate import BSpline
from scipy.signal import czt

from .bapu import SUPPORT_FACTOR
from .coeffs import CoeffField, Layout
from .errors import DimensionMismatch, NoConvergence, PreconditionError, TargetNotReached
from .frame import TightFrame
from .grid import Grid, SampledSignal
from .lattice import AlphaGeometry, interior_half_width
from .transform import SpaceParams, mod_norm, seq_norm

ENVELOPE_FLOOR = 1e-3  # effective support: weighted |mu| above this level
SHIFT_SPREAD = 1.5  # shifts cover the effective support scaled by this factor
FREQ_WINDOW = 2.0  # frequency errors are taken on |eta|_inf <= FREQ_WINDOW * (bump support radius)


# -- generator ---------------------------------------------------------------------
@dataclass(frozen=True)
class BSplineGenerator:
    """Tensor-product cardinal B-spline of order ``p`` (support ``[0, p]^n``, integral 1)."""

    order: int
    dim: int = 1

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 3:
            raise PreconditionError(f"B-spline order must be an integer >= 3, got {self.order}")
        if self.dim < 1:
            raise PreconditionError("dim must be positive")

    @property
    def _basis(self) -> BSpline:
        return BSpline.basis_element(np.arange(self.order + 1, dtype=float), extrapolate=False)

    def eval1(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        v = self._basis(t)
        return np.where(np.isnan(v), 0.0, v)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for d in range(self.dim):
            out = out * self.eval1(x[..., d])
        return out

    def ft1(self, w) -> np.ndarray:
        """``int g_1(t) e^{-i t w} dt = ((1 - e^{-iw}) / (iw))^p``."""
        w = np.asarray(w, dtype=float)
        small = np.abs(w) < 1e-8
        ws = np.where(small, 1.0, w)
        base = np.where(small, 1.0 - 0.5j * w, (1.0 - np.exp(-1j * ws)) / (1j * ws))
        return base**self.order

    def ft(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = np.ones(w.shape[:-1], dtype=complex)
        for d in range(self.dim):
            out = out * self.ft1(w[..., d])
        return out

    def decay_exponent(self, w_lo: float = 10.0, w_hi: float = 1000.0) -> float:
        """Fitted ``s`` in ``|g^(w)| ~ w^{-s}`` from the per-period maxima along one axis."""
        periods = np.arange(int(w_lo / (2 * np.pi)) + 1, int(w_hi / (2 * np.pi)))
        t = np.linspace(0.0, 2 * np.pi, 257)[None, :] + 2 * np.pi * periods[:, None]
        peak = np.max(np.abs(self.ft1(t)), axis=1)
        centre = 2 * np.pi * (periods + 0.5)
        slope = np.polyfit(np.log(centre), np.log(peak), 1)[0]
        return float(-slope)

    def decay_constant(self, M: float, w_max: float = 1000.0) -> float:
        """``sup |g^(w)| (1 + |w|)^{M+1}`` along one axis (finite iff ``M + 1 <= order``)."""
        w = np.linspace(0.0, w_max, 200001)
        return float(np.max(np.abs(self.ft1(w)) * (1 + w) ** (M + 1)))


# -- K-term approximations -------------------------------------------------------------
@dataclass
class KTermApprox:
    """``tau(y) = sum_i a_i g_m(y + b_i)`` with shifts on a tensor grid.

    ``coeffs`` has shape ``(K_1, ..., K_n)``; ``shifts[d]`` holds the
    ``K_d`` shift values along axis d.
    """

    generator: BSplineGenerator
    m: float
    coeffs: np.ndarray
    shifts: list
    eps_space: float = float("nan")
    eps_freq: float = float("nan")
    eps_freq_grid: float = float("nan")  # same weighted error over the whole grid (round-off bound)

    @property
    def K(self) -> int:
        return int(self.coeffs.size)

    @property
    def eps(self) -> float:
        return max(self.eps_space, self.eps_freq)

    @property
    def dim(self) -> int:
        return self.generator.dim

    def axis_design(self, y1: np.ndarray, d: int) -> np.ndarray:
        """``m g_1(m (y + b_i))`` for the 1-D points ``y1`` and the shifts of axis d."""
        b = np.asarray(self.shifts[d], dtype=float)
        return self.m * self.generator.eval1(self.m * (np.asarray(y1)[:, None] + b[None, :]))

    def axis_design_sparse(self, y1: np.ndarray, d: int) -> sps.csr_matrix:
        """Sparse version of :meth:`axis_design`; uses the shift lattice when it is uniform."""
        b = np.asarray(self.shifts[d], dtype=float)
        y1 = np.asarray(y1, dtype=float).ravel()
        K = len(b)
        if K < 16 or not np.allclose(np.diff(b), b[1] - b[0], rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(b)))):
            return sps.csr_matrix(self.axis_design(y1, d))
        p, m = self.generator.order, self.m
        t = m * (y1 + b[0])
        st = m * (b[1] - b[0])
        # u = t + i st must lie in [0, p)
        first = np.ceil(np.minimum(-t / st, (p - t) / st) - 1e-12).astype(np.int64)
        span = int(math.ceil(p / abs(st))) + 1
        i = first[:, None] + np.arange(span)[None, :]
        u = t[:, None] + i * st
        ok = (i >= 0) & (i < K) & (u > 0) & (u < p)
        rows = np.broadcast_to(np.arange(len(y1))[:, None], i.shape)[ok]
        vals = m * self.generator.eval1(u[ok])
        return sps.csr_matrix((vals, (rows, i[ok])), shape=(len(y1), K))

    def eval_axes(self, axes: list) -> np.ndarray:
        """Values on the tensor grid spanned by the 1-D coordinate arrays ``axes``."""
        out = np.asarray(self.coeffs, dtype=complex)
        for d, y1 in enumerate(axes):
            G = self.axis_design(y1, d)  # (P_d, K_d)
            out = np.tensordot(G, out, axes=([1], [d]))  # new axis in front
            out = np.moveaxis(out, 0, d)
        return out

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, self.dim)
        vals = np.ones((flat.shape[0],) + self.coeffs.shape, dtype=complex)
        for d in range(self.dim):
            G = self.axis_design(flat[:, d], d)
            vals = vals * G.reshape((flat.shape[0],) + (1,) * d + (-1,) + (1,) * (self.dim - 1 - d))
        out = np.tensordot(vals, self.coeffs, axes=self.dim) if self.dim else vals
        return out.reshape(y.shape[:-1])

    def ft(self, eta) -> np.ndarray:
        """Unitary Fourier transform ``(2 pi)^{-n/2} int tau(y) e^{-i y.eta} dy``."""
        eta = np.asarray(eta, dtype=float)
        flat = eta.reshape(-1, self.dim)
        vals = np.ones((flat.shape[0],) + self.coeffs.shape, dtype=complex)
        for d in range(self.dim):
            e = np.exp(1j * np.outer(flat[:, d], self.shifts[d]))
            vals = vals * e.reshape((flat.shape[0],) + (1,) * d + (-1,) + (1,) * (self.dim - 1 - d))
        s = np.tensordot(vals, self.coeffs, axes=self.dim)
        out = (2 * np.pi) ** (-self.dim / 2) * s * self.generator.ft(flat / self.m)
        return out.reshape(eta.shape[:-1])

    def ft_axes(self, eta_axes: list) -> np.ndarray:
        """Unitary transform on the tensor grid spanned by uniform 1-D frequency arrays."""
        out = np.asarray(self.coeffs, dtype=complex)
        for d, e1 in enumerate(eta_axes):
            e1 = np.asarray(e1, dtype=float)
            b = np.asarray(self.shifts[d], dtype=float)
            front = np.moveaxis(out, d, 0).reshape(len(b), -1)
            if len(b) > 1 and len(e1) > 1 and np.allclose(np.diff(b), b[1] - b[0]) and np.allclose(np.diff(e1), e1[1] - e1[0]):
                db, de = b[1] - b[0], e1[1] - e1[0]
                pre = np.exp(1j * db * e1[0] * np.arange(len(b)))[:, None]
                S = czt(front * pre, len(e1), w=np.exp(1j * db * de), a=1.0, axis=0)
                S = S * np.exp(1j * b[0] * e1)[:, None]
            else:
                S = np.exp(1j * np.outer(e1, b)) @ front
            S = S * self.generator.ft1(e1 / self.m)[:, None]
            out = np.moveaxis(S.reshape((len(e1),) + np.moveaxis(out, d, 0).shape[1:]), 0, d)
        return (2 * np.pi) ** (-self.dim / 2) * out

    def support(self) -> np.ndarray:
        """Bounding box ``(n, 2)`` of the support of tau."""
        p = self.generator.order
        return np.array([[np.min(-np.asarray(b)), np.max(-np.asarray(b)) + p / self.m] for b in self.shifts])


def centred_shifts(centres, generator: BSplineGenerator, m: float) -> np.ndarray:
    """Shifts that centre ``g_m(. + b)`` at the given points."""
    return -np.asarray(centres, dtype=float) + generator.order / (2.0 * m)


def lattice_centres(K: int, m: float) -> np.ndarray:
    """``K`` centres on ``m^{-1} Z`` (offset by half a step when K is odd), symmetric about 0."""
    return (np.arange(K) - K // 2) / m


def periodic_design(tau: KTermApprox, y1: np.ndarray, d: int, period: float | None, twist: float = 0.0) -> sps.csr_matrix:
    """Sparse ``m g_1(m (y + b_i))`` summed over the period images that can reach ``y1``.

    Image ``j`` carries the phase ``exp(i j twist)``: periodising
    ``e^{i x xi_k} tau(r x)`` on the torus adds ``e^{2 i T j xi_k}`` to the j-th
    copy of tau.
    """
    if period is None:
        return tau.axis_design_sparse(y1, d)
    b = np.asarray(tau.shifts[d], dtype=float)
    p, m = tau.generator.order, tau.m
    lo, hi = np.min(-b), np.max(-b) + p / m
    y1 = np.asarray(y1, dtype=float)
    jmin = int(math.floor((lo - np.max(y1)) / period))
    jmax = int(math.ceil((hi - np.min(y1)) / period))
    out = None
    for j in range(jmin, jmax + 1):
        G = tau.axis_design_sparse(y1 + j * period, d)
        if twist and j:
            G = G * np.exp(1j * j * twist)
        out = G if out is None else out + G
    return out


def _solve(A: sps.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    from scipy.sparse.linalg import lsqr, spsolve

    if A.shape[0] == A.shape[1]:
        sol = spsolve(A.tocsc(), rhs)
        if np.all(np.isfinite(sol)):
            return np.asarray(sol)
    if A.shape[0] * A.shape[1] <= 4e7:
        return np.linalg.lstsq(A.toarray(), rhs, rcond=None)[0]
    return lsqr(A, rhs, atol=1e-15, btol=1e-15, iter_lim=20000)[0]


def fit_samples(axes: list, target: np.ndarray, generator: BSplineGenerator, m: float, shifts: list,
                N_env: float = 0.0, period: float | None = None, twist=None) -> KTermApprox:
    """Weighted least squares for the coefficients on a tensor grid of samples.

    Residuals are weighted by ``(1 + |y|)^{N_env}``; samples outside the
    support of every shifted spline do not influence the fit.  With a
    ``period`` the splines are periodised (with per-axis image phases
    ``twist``), matching atoms sampled on a torus.
    """
    n = generator.dim
    if len(axes) != n or len(shifts) != n:
        raise DimensionMismatch("axes / shifts do not match the generator dimension")
    tau = KTermApprox(generator, float(m), np.zeros([len(b) for b in shifts], dtype=complex), [np.asarray(b, float) for b in shifts])
    tw = np.zeros(n) if twist is None else np.asarray(twist, dtype=float)
    mats = [periodic_design(tau, y1, d, period, tw[d]) for d, y1 in enumerate(axes)]
    D = mats[0]
    for Md in mats[1:]:
        D = sps.kron(D, Md, format="csr")
    D = sps.csr_matrix(D)
    rows = np.flatnonzero(np.diff(D.indptr))
    if len(rows) == 0:
        raise PreconditionError("the shifted splines miss every sample")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    w = (1 + np.linalg.norm(mesh[rows], axis=-1)) ** N_env
    A = sps.diags(w) @ D[rows]
    rhs = np.asarray(target, dtype=complex).ravel()[rows] * w
    tau.coeffs = _solve(sps.csr_matrix(A), rhs).reshape(tau.coeffs.shape)
    return tau


def periodic_values(tau: KTermApprox, axes: list, period: float | None, twist=None) -> np.ndarray:
    """``tau`` (periodised when ``period`` is given) on the tensor grid spanned by ``axes``."""
    out = np.asarray(tau.coeffs, dtype=complex)
    tw = np.zeros(len(axes)) if twist is None else np.asarray(twist, dtype=float)
    for d, y1 in enumerate(axes):
        G = periodic_design(tau, y1, d, period, tw[d])
        front = np.moveaxis(out, d, 0)
        res = G @ front.reshape(front.shape[0], -1)
        out = np.moveaxis(np.asarray(res).reshape((G.shape[0],) + front.shape[1:]), 0, d)
    return out


# -- envelopes of the tight frame ------------------------------------------------------
@dataclass
class Envelope:
    """Samples of ``mu_k`` (space) and ``mu_k^`` (frequency) on the grid of a frame."""

    k: tuple
    r: float
    y_axes: list  # 1-D coordinates r x
    period: float  # 2 T r
    twist: np.ndarray  # 2 T xi_k: phase between period images
    values: np.ndarray  # mu_k on the tensor grid
    eta: np.ndarray  # (..., n) grid frequencies mapped to (xi - xi_k) / r
    spectrum: np.ndarray  # mu_k^ at eta


def envelope(frame: TightFrame, k) -> Envelope:
    """``mu_k(r x) = r^{-n/2} e^{-i x.xi_k} phi_{k,0}(x)`` and its spectrum."""
    g, grid = frame.geometry, frame.grid
    n = g.dim
    kk = np.asarray(k, dtype=float)
    r = float(g.r(kk))
    xik = g.xi(kk)
    kl = (tuple(int(v) for v in k), (0,) * n)
    spec = frame.atom_spectrum(kl)
    phi = grid.inverse(spec)
    x = grid.coords()
    mu = r ** (-n / 2) * np.exp(-1j * (x @ xik)) * phi
    eta = (grid.freqs() - xik) / r
    return Envelope(kl[0], r, [r * grid.x1] * n, 2 * grid.T * r, 2 * grid.T * np.asarray(xik, float), mu, eta, r ** (n / 2) * spec)


def effective_halfwidth(env: Envelope, N_env: float = 0.0, floor: float = ENVELOPE_FLOOR) -> float:
    """Smallest ``Y`` with ``|mu(y)| (1+|y|)^{N_env} <= floor`` outside ``|y|_inf <= Y``."""
    y = np.stack(np.meshgrid(*env.y_axes, indexing="ij"), axis=-1)
    rad = np.max(np.abs(y), axis=-1)
    big = np.abs(env.values) * (1 + np.linalg.norm(y, axis=-1)) ** N_env > floor
    return float(np.max(rad[big])) if np.any(big) else 0.0


def envelope_errors(tau: KTermApprox, env: Envelope, N_env: float, M_env: float,
                    window: float | None = None) -> tuple[float, float, float]:
    """Weighted sup errors ``(space, frequency in window, frequency on the whole grid)``.

    Space: ``sup |mu - tau| (1+|y|)^N``.  Frequency: ``sup |mu^ - tau^| (1+|eta|)^M``
    over ``|eta|_inf <= window`` (everywhere when ``window`` is None).  tau is
    periodised in space, so its transform at the grid frequencies is the
    analytic transform of the compactly supported tau.  Far outside the band
    the weight exceeds the reciprocal of double-precision round-off, so the
    whole-grid value only reports round-off times the weight.
    """
    n = len(env.y_axes)
    y = np.stack(np.meshgrid(*env.y_axes, indexing="ij"), axis=-1)
    vals = periodic_values(tau, env.y_axes, env.period, env.twist)
    es = np.max(np.abs(env.values - vals) * (1 + np.linalg.norm(y, axis=-1)) ** N_env)
    eta_axes = [env.eta[(0,) * d + (slice(None),) + (0,) * (n - 1 - d) + (d,)] for d in range(n)]
    werr = np.abs(env.spectrum - tau.ft_axes(eta_axes)) * (1 + np.linalg.norm(env.eta, axis=-1)) ** M_env
    ef_grid = float(np.max(werr))
    ef = ef_grid if window is None else float(np.max(werr[np.max(np.abs(env.eta), axis=-1) <= window]))
    return float(es), ef, ef_grid


def shift_window(frame: TightFrame, k, N_env: float = 4.0) -> float:
    """Half width of the shift window: ``SHIFT_SPREAD`` x the effective support, at most half a period."""
    env = envelope(frame, k)
    return min(SHIFT_SPREAD * effective_halfwidth(env, N_env), env.period / 2)


def fit_tau(frame: TightFrame, k, generator: BSplineGenerator, K: int | None = None, m: float | None = None,
            N_env: float = 4.0, M_env: float = 11.0, eps_target: float | None = None,
            shifts: np.ndarray | None = None) -> KTermApprox:
    """Fit ``tau_k`` to the envelope ``mu_k`` with ``K`` shifts per axis.

    The shift centres are ``K`` equispaced points (spacing ``2Y/K``) over the
    window ``[-Y, Y)``, ``Y`` = ``SHIFT_SPREAD`` x the effective support of
    ``mu_k`` (at most half a period).  ``K`` defaults to the number of
    samples in the window and ``m`` to one knot per centre (``m = K / 2Y``).
    Explicit ``shifts`` override the window.  The achieved errors are stored
    on the result; ``TargetNotReached`` is raised when their maximum exceeds
    ``eps_target``.  The frequency error is taken on
    ``|eta|_inf <= FREQ_WINDOW * 1.5 c1``.
    """
    if generator.dim != frame.geometry.dim:
        raise DimensionMismatch("generator and frame dimensions differ")
    env = envelope(frame, k)
    if shifts is None:
        Y = min(SHIFT_SPREAD * effective_halfwidth(env, N_env), env.period / 2)
        if Y <= 0:
            raise PreconditionError("envelope vanishes on the grid")
        if K is None:
            K = max(1, int(round(2 * Y / (env.r * frame.grid.h))))
        if K < 1:
            raise PreconditionError("K must be positive")
        if m is None:
            m = K / (2 * Y)
        centres = -Y + 2 * Y * np.arange(K) / K if K > 1 else np.zeros(1)
        shifts = centred_shifts(centres, generator, m)
    elif m is None:
        m = 1.0
    if m <= 0:
        raise PreconditionError("m must be positive")
    tau = fit_samples(env.y_axes, env.values, generator, m, [np.asarray(shifts, float)] * generator.dim, N_env,
                      env.period, env.twist)
    window = FREQ_WINDOW * SUPPORT_FACTOR * frame.geometry.c1
    tau.eps_space, tau.eps_freq, tau.eps_freq_grid = envelope_errors(tau, env, N_env, M_env, window)
    if eps_target is not None and tau.eps > eps_target:
        raise TargetNotReached(f"k={tuple(env.k)}: achieved eps {tau.eps:.3g} > target {eps_target:.3g}", tau.eps)
    return tau


def exponent_targets(J: float, beta: float, s: float = 0.0, delta: float = 1.0) -> tuple[float, float]:
    """``(N, M) = (2(J + delta), 2(J + delta) + (2/beta)(|s| + 2J + 3 delta/2))``."""
    N = 2 * (J + delta)
    return N, N + (2.0 / beta) * (abs(s) + 2 * J + 1.5 * delta)


# -- families ---------------------------------------------------------------------------
@dataclass
class PerturbedFamily:
    """A family indexed like a tight frame, stored as an atoms x samples matrix."""

    layout: Layout
    grid: Grid
    matrix: sps.csr_matrix | np.ndarray
    boxes: np.ndarray | None = None  # (atoms, n, 2) declared supports in x, or None
    eps: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def geometry(self) -> AlphaGeometry:
        return self.layout.geometry

    def space_matrix(self):
        return self.matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sps.issparse(self.matrix) else np.asarray(self.matrix)

    def atom(self, kl) -> SampledSignal:
        row = self.matrix[self.layout.flat(kl)]
        row = row.toarray().ravel() if sps.issparse(row) else np.asarray(row).ravel()
        return SampledSignal(self.grid, row.reshape(self.grid.shape))

    def combine(self, other: "PerturbedFamily", a: complex = 1.0, b: complex = 1.0) -> "PerturbedFamily":
        """Atom-wise ``a * self + b * other``."""
        if not self.layout.same_as(other.layout) or self.grid != other.grid:
            raise DimensionMismatch("families over different layouts or grids")
        M = a * self.matrix + b * other.matrix
        return PerturbedFamily(self.layout, self.grid, sps.csr_matrix(M) if sps.issparse(M) else M)


def frame_family(frame: TightFrame) -> PerturbedFamily:
    """The tight frame itself as a (dense) family."""
    return PerturbedFamily(frame.layout, frame.grid, frame.space_matrix())


def build_perturbed_family(frame: TightFrame, taus: dict) -> PerturbedFamily:
    """``psi_{k,l}(x) = r_k^{n/2} tau_k(r_k x - pi l / a) e^{i x.xi_k}``, periodised on the grid.

    ``taus`` maps each frequency index ``k`` (tuple) to a :class:`KTermApprox`.
    Entries outside the declared support box of an atom are never stored.
    """
    lay, grid, g = frame.layout, frame.grid, frame.geometry
    n, N, h, T = g.dim, grid.N, grid.h, grid.T
    rows, cols, vals, boxes = [], [], [], []
    eps = 0.0
    for i, k in enumerate(lay.ks):
        key = tuple(int(v) for v in k)
        if key not in taus:
            raise PreconditionError(f"no envelope approximation for k={key}")
        tau = taus[key]
        if tau.dim != n:
            raise DimensionMismatch("approximation dimension differs from the frame")
        if math.isfinite(tau.eps):
            eps = max(eps, tau.eps)
        kk = k.astype(float)
        r = float(g.r(kk))
        xik = g.xi(kk)
        sup = tau.support()  # (n, 2) in y
        ells1 = np.arange(lay.ell_lo[i], lay.ell_lo[i] + lay.ell_count[i])
        count = len(ells1)
        shift = math.pi / g.a * ells1  # y offset of each translation index
        idx_axes, lo_axes, hi_axes, shape = [], [], [], []
        V = np.asarray(tau.coeffs, dtype=complex)
        for d in range(n):
            W = int(math.ceil((sup[d, 1] - sup[d, 0]) / (r * h))) + 2
            x_lo = (sup[d, 0] + shift) / r
            start = np.ceil((x_lo + T) / h - 1e-9).astype(np.int64)
            idx = start[:, None] + np.arange(W)[None, :]  # unwrapped sample indices (count, W)
            x = -T + idx * h
            G = tau.axis_design_sparse((r * x - shift[:, None]).ravel(), d)  # (count W, K_d)
            front = np.moveaxis(V, d, 0)
            res = np.asarray(G @ front.reshape(front.shape[0], -1))
            res = res * np.exp(1j * x.ravel() * xik[d])[:, None]
            V = np.moveaxis(res.reshape((count * W,) + front.shape[1:]), 0, d)
            idx_axes.append(idx % N)
            lo_axes.append(x_lo)
            hi_axes.append((sup[d, 1] + shift) / r)
            shape.append(W)
        V = V.reshape(sum(((count, w) for w in shape), ()))
        perm = [2 * d for d in range(n)] + [2 * d + 1 for d in range(n)]
        V = np.transpose(V, perm) * r ** (n / 2)  # (l_1..l_n, w_1..w_n)
        col = np.zeros((count,) * n + tuple(shape), dtype=np.int64)
        for d in range(n):
            shp = [1] * (2 * n)
            shp[d], shp[n + d] = count, shape[d]
            col = col + idx_axes[d].reshape(shp) * N ** (n - 1 - d)
        row = lay.offsets[i] + np.arange(count**n).reshape((count,) * n + (1,) * n)
        rows.append(np.broadcast_to(row, col.shape).ravel())
        cols.append(col.ravel())
        vals.append(V.ravel())
        lo = np.stack(np.meshgrid(*lo_axes, indexing="ij"), axis=-1).reshape(-1, n)
        hi = np.stack(np.meshgrid(*hi_axes, indexing="ij"), axis=-1).reshape(-1, n)
        boxes.append(np.stack([lo, hi], axis=-1))
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    keep = vals != 0
    mat = sps.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(lay.size, N**n))
    mat.sum_duplicates()
    return PerturbedFamily(lay, grid, mat, np.concatenate(boxes), eps, {"kind": "bspline"})


def fit_all(frame: TightFrame, generator: BSplineGenerator, K: int | None = None, m: float | None = None,
            N_env: float = 4.0, M_env: float = 11.0, eps_target: float | None = None) -> dict:
    """``fit_tau`` for every frequency index of the frame's truncation."""
    return {tuple(int(v) for v in k): fit_tau(frame, k, generator, K, m, N_env, M_env, eps_target)
            for k in frame.layout.ks}


def support_violation(family: PerturbedFamily) -> float:
    """Largest ``|psi_{k,l}(x)|`` at samples outside the declared box (periodically)."""
    if family.boxes is None:
        raise PreconditionError("family has no declared supports")
    grid = family.grid
    n, N, h, T = grid.dim, grid.N, grid.h, grid.T
    M = sps.coo_matrix(family.matrix)
    sub = np.unravel_index(M.col, (N,) * n)
    worst = 0.0
    x = np.stack([-T + s * h for s in sub], axis=-1)
    lo, hi = family.boxes[M.row, :, 0], family.boxes[M.row, :, 1]
    # shift each sample by the period so it lands at or after the box start
    P = 2 * T
    xs = lo + np.mod(x - lo, P)
    outside = np.any(xs > hi + 1e-9 * h, axis=-1)
    if np.any(outside):
        worst = float(np.max(np.abs(M.data[outside])))
    return worst


def envelope_perturbation(frame: TightFrame, eps: float, generator: BSplineGenerator, m: float = 1.0) -> PerturbedFamily:
    """``psi = phi + eps * nu`` with ``nu_{k,l}`` built from the centred spline ``g_m``."""
    n = frame.geometry.dim
    bump = KTermApprox(generator, m, np.ones((1,) * n, dtype=complex), [centred_shifts([0.0], generator, m)] * n)
    nu = build_perturbed_family(frame, {tuple(int(v) for v in k): bump for k in frame.layout.ks})
    base = frame_family(frame)
    fam = PerturbedFamily(frame.layout, frame.grid, base.matrix + eps * nu.matrix.toarray(), None, eps,
                          {"kind": "envelope+eps*spline"})
    return fam


# -- frame operator --------------------------------------------------------------------
def band_mask(grid: Grid, R: float) -> np.ndarray:
    """Indicator of ``|xi|_inf <= R`` on the frequency grid."""
    return (np.max(np.abs(grid.freqs()), axis=-1) <= R).astype(float)


def _project(grid: Grid, values: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return values
    return grid.inverse(grid.fourier(values) * mask)


def family_analyze(family: PerturbedFamily, f: SampledSignal) -> CoeffField:
    """``{<f, psi_{k,l}>}`` by quadrature."""
    if f.grid != family.grid:
        raise DimensionMismatch("signal and family grids differ")
    h = family.grid.h ** family.grid.dim
    return CoeffField(family.layout, h * (family.matrix.conj() @ f.values.ravel()))


def family_synthesize(family: PerturbedFamily, c: CoeffField) -> SampledSignal:
    if not c.layout.same_as(family.layout):
        raise DimensionMismatch("coefficient layout does not match the family")
    v = family.matrix.T @ c.data
    return SampledSignal(family.grid, np.asarray(v).reshape(family.grid.shape))


def frame_operator_apply(family: PerturbedFamily, f: SampledSignal, R: float | None = None) -> SampledSignal:
    """``S f = sum <f, psi> psi``, restricted to ``|xi|_inf <= R`` on both sides when R is given."""
    grid = family.grid
    mask = band_mask(grid, R) if R is not None else None
    fb = SampledSignal(grid, _project(grid, f.values, mask))
    out = family_synthesize(family, family_analyze(family, fb)).values
    return SampledSignal(grid, _project(grid, out, mask))


@dataclass
class NeumannResult:
    solution: SampledSignal
    iterations: int
    history: list

    @property
    def contraction(self) -> float:
        """Geometric mean residual ratio over the iterations."""
        h = [v for v in self.history if v > 0]
        if len(h) < 2:
            return 0.0
        return float((h[-1] / h[0]) ** (1.0 / (len(h) - 1)))


def neumann_invert(family: PerturbedFamily, g: SampledSignal, R: float, tol: float = 1e-10, max_iter: int = 200,
                   patience: int = 3) -> NeumannResult:
    """Solve ``P S P f = g`` by the Neumann series ``f <- f + (g - P S P f)``.

    Raises ``NoConvergence`` when the residual fails to shrink for
    ``patience`` consecutive steps or ``max_iter`` is reached.
    """
    grid = family.grid
    g0 = SampledSignal(grid, _project(grid, g.values, band_mask(grid, R)))
    ref = g0.norm()
    if ref == 0:
        return NeumannResult(g0, 0, [0.0])
    f = SampledSignal(grid, np.zeros(grid.shape, dtype=complex))
    res = g0
    history = [1.0]
    bad = 0
    for it in range(1, max_iter + 1):
        f = f + res
        res = g0 - frame_operator_apply(family, f, R)
        rel = res.norm() / ref
        bad = bad + 1 if rel >= history[-1] else 0
        history.append(rel)
        if rel <= tol:
            return NeumannResult(f, it, history)
        if bad >= patience:
            raise NoConvergence(f"Neumann series does not contract (residual {rel:.3g} after {it} steps)", history)
    raise NoConvergence(f"Neumann series not converged after {max_iter} steps (residual {history[-1]:.3g})", history)


@dataclass
class ExpansionResult:
    coeffs: CoeffField
    reconstruction_error: float
    iterations: int
    contraction: float


def frame_expansion(family: PerturbedFamily, f: SampledSignal, R: float, tol: float = 1e-10) -> ExpansionResult:
    """Dual-frame coefficients ``<S^{-1} f, psi>`` and the relative in-band reconstruction error."""
    grid = family.grid
    mask = band_mask(grid, R)
    nr = neumann_invert(family, f, R, tol)
    c = family_analyze(family, SampledSignal(grid, _project(grid, nr.solution.values, mask)))
    rec = _project(grid, family_synthesize(family, c).values, mask)
    fb = _project(grid, f.values, mask)
    err = float(np.linalg.norm(rec - fb) / np.linalg.norm(fb))
    return ExpansionResult(c, err, nr.iterations, nr.contraction)


def contraction_ratio(family: PerturbedFamily, panel, R: float) -> float:
    """Largest ``||(P - P S P) f|| / ||P f||`` over a panel (below 1 means the series converges)."""
    grid = family.grid
    mask = band_mask(grid, R)
    worst = 0.0
    for f in panel:
        fb = SampledSignal(grid, _project(grid, f.values, mask))
        d = fb - frame_operator_apply(family, fb, R)
        worst = max(worst, d.norm() / fb.norm())
    return worst


def estimate_eps0(frame: TightFrame, generator: BSplineGenerator, panel, R: float, m: float = 1.0,
                  hi: float = 1.0, steps: int = 20) -> float:
    """Largest ``eps`` (bisection) for which ``phi + eps * nu`` still gives a contraction."""
    lo = 0.0
    base = frame_family(frame)
    nu = build_perturbed_family(frame, {tuple(int(v) for v in k): KTermApprox(
        generator, m, np.ones((1,) * frame.geometry.dim, dtype=complex),
        [centred_shifts([0.0], generator, m)] * frame.geometry.dim) for k in frame.layout.ks}).matrix.toarray()
    while contraction_ratio(PerturbedFamily(frame.layout, frame.grid, base.matrix + hi * nu), panel, R) < 1.0:
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            return float("inf")
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        fam = PerturbedFamily(frame.layout, frame.grid, base.matrix + mid * nu)
        if contraction_ratio(fam, panel, R) < 1.0:
            lo = mid
        else:
            hi = mid
    return lo


# -- norming and the decomposition identity ------------------------------------------------
@dataclass
class NormingReport:
    ratio_min: float
    ratio_max: float

    def to_json(self) -> dict:
        return {"C1": self.ratio_min, "C2": self.ratio_max}


def norming_check(family: PerturbedFamily, sp: SpaceParams, panel, frame: TightFrame) -> NormingReport:
    """Ratios ``seq_norm({<f, psi>}) / mod_norm(f)`` over a panel."""
    if len(panel) == 0:
        raise PreconditionError("empty panel")
    ratios = []
    for f in panel:
        den = mod_norm(f, sp, frame.system)
        if den == 0:
            raise PreconditionError("panel contains a zero signal")
        ratios.append(seq_norm(family_analyze(family, f), sp, frame.grid) / den)
    return NormingReport(float(min(ratios)), float(max(ratios)))


def decomposition_identity_error(frame: TightFrame, family: PerturbedFamily, kmax_rows: int | None = None) -> float:
    """Entrywise gap in ``<(I - S) phi_{k,l}, phi_{j,m}> = (D1 D2 + D3 D4)_{(j,m),(k,l)}``.

    ``D1 = G(Phi - Psi, Phi)``, ``D2 = G(Phi, Phi)``, ``D3 = G(Psi, Phi)``,
    ``D4 = G(Phi, Phi - Psi)`` with ``G(eta, psi)_{(j,m),(k,l)} = <eta_{k,l}, psi_{j,m}>``.
    Only columns with ``|k|_inf <= kmax_rows`` are compared: there the tight
    frame reproduces its own atoms exactly.
    """
    grid = family.grid
    h = grid.h**grid.dim
    Phi = frame.space_matrix()
    Psi = family.dense()
    if Phi.shape != Psi.shape:
        raise DimensionMismatch("families of different sizes")

    def G(eta, psi):
        return h * (psi.conj() @ eta.T)

    lay = frame.layout
    kcap = frame.truncation.kmax - 2 if kmax_rows is None else kmax_rows
    cols = np.flatnonzero(np.max(np.abs(lay.ks[lay.k_of]), axis=1) <= kcap)
    Phi_c = Phi[cols]
    # (I - S) phi_{k,l} = phi - sum_i <phi, psi_i> psi_i
    IS = Phi_c - (h * (Phi_c @ Psi.conj().T)) @ Psi
    lhs = G(IS, Phi)
    D1, D2 = G(Phi - Psi, Phi), G(Phi_c, Phi)
    D3, D4 = G(Psi, Phi), G(Phi_c, Phi - Psi)
    rhs = D1 @ D2 + D3 @ D4
    scale = max(1.0, float(np.max(np.abs(lhs))))
    return float(np.max(np.abs(lhs - rhs)) / scale)
