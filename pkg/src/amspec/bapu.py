"""Smooth bump partition on the alpha-covering and its normalised square root.

``phi_k(xi) = rho(|xi - xi_k| / (c1 r_k))`` equals 1 on the cover ball and
vanishes outside ``B(xi_k, 1.5 c1 r_k)``;
``theta_k = phi_k / sqrt(sum_l phi_l^2)`` then satisfies
``sum_k theta_k^2 = 1`` wherever the denominator is complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DenominatorUnderflow, NyquistViolation, PreconditionError
from .grid import Grid
from .lattice import AlphaGeometry, Truncation, as_index, bracket, covering_members, interior_half_width
from .mixednorm import PVec, mixed_norm

SUPPORT_FACTOR = 1.5
DENOMINATOR_GUARD = 0.25


def _smooth_step(u: np.ndarray, edge: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    e0 = edge(u)
    e1 = edge(1.0 - u)
    return e0 / (e0 + e1)


def _edge_exp(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)


def _edge_exp2(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u * u, 1.0)), 0.0)


@dataclass(frozen=True)
class BumpProfile:
    """Radial transition ``rho``: 1 on ``t <= 1``, 0 on ``t >= 3/2``, smooth, monotone."""

    name: str = "exp"

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        u = (SUPPORT_FACTOR - t) / (SUPPORT_FACTOR - 1.0)
        edge = _edge_exp if self.name == "exp" else _edge_exp2
        return _smooth_step(u, edge)

    @classmethod
    def standard(cls) -> "BumpProfile":
        return cls("exp")

    @classmethod
    def alternate(cls) -> "BumpProfile":
        """A second admissible profile built from ``exp(-1/u^2)``."""
        return cls("exp2")


@dataclass(frozen=True)
class FreqBlock:
    """Values on the box ``start[d] <= j_d < start[d] + shape[d]`` of a centred frequency grid."""

    start: tuple
    values: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def slices(self) -> tuple:
        return tuple(slice(s, s + m) for s, m in zip(self.start, self.values.shape))


@dataclass
class BapuSystem:
    """The bump partition ``{phi_k}`` and its square root ``{theta_k}``.

    Pointwise :meth:`theta` normalises with the *truncated* family (and guards
    against points outside the certified region).  Grid blocks used by the
    frame (:meth:`theta_block`) normalise with every lattice neighbour,
    truncated or not, so each truncated atom is an exact member of the full
    tight frame.
    """

    geometry: AlphaGeometry
    truncation: Truncation
    profile: BumpProfile = field(default_factory=BumpProfile.standard)

    def __post_init__(self):
        g = self.geometry
        self.ks = self.truncation.freq_indices(g.dim)
        self.index = {tuple(int(v) for v in k): i for i, k in enumerate(self.ks)}
        self._nbr_cache: dict[tuple, np.ndarray] = {}

    # -- pointwise evaluation --------------------------------------------------
    def phi(self, xi, k) -> np.ndarray:
        """phi_k at points ``xi`` (shape (..., n))."""
        g = self.geometry
        k = np.asarray(as_index(k), dtype=float)
        xi = np.asarray(xi, dtype=float)
        d = np.sqrt(np.sum((xi - g.xi(k)) ** 2, axis=-1))
        return self.profile(d / (g.c1 * float(g.r(k))))

    def _phi_many(self, xi: np.ndarray, ks: np.ndarray) -> np.ndarray:
        """phi at points (P, n) for candidate indices (P, C, n) -> (P, C)."""
        g = self.geometry
        d = np.sqrt(np.sum((g.xi(ks) - xi[:, None, :]) ** 2, axis=-1))
        return self.profile(d / (g.c1 * g.r(ks)))

    def denominator(self, xi, truncated: bool = True) -> np.ndarray:
        """``sum_l phi_l(xi)^2`` over the truncated family (or the whole lattice)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        cands, mask = covering_members(
            self.geometry, xi, SUPPORT_FACTOR, self.truncation.kmax if truncated else None
        )
        ph = self._phi_many(xi, cands)
        return np.sum(np.where(mask, ph, 0.0) ** 2, axis=1)

    def theta(self, xi, k) -> np.ndarray:
        """theta_k at points ``xi``; raises if the truncated denominator is < 1/4."""
        xi = np.asarray(xi, dtype=float)
        flat = xi.reshape(-1, self.geometry.dim)
        den = self.denominator(flat, truncated=True)
        if np.any(den < DENOMINATOR_GUARD):
            bad = flat[den < DENOMINATOR_GUARD][0]
            raise DenominatorUnderflow(
                f"sum of squared bumps {den.min():.3g} < {DENOMINATOR_GUARD} at xi={bad.tolist()}: "
                "point outside the certified region"
            )
        val = self.phi(flat, k) / np.sqrt(den)
        return val.reshape(xi.shape[:-1]) if xi.ndim > 1 else val

    def sum_theta_squared(self, xi) -> np.ndarray:
        """``sum_k theta_k(xi)^2`` with each theta_k normalised through its own neighbour list."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        cands, mask = covering_members(self.geometry, xi, SUPPORT_FACTOR, self.truncation.kmax)
        total = np.zeros(len(xi))
        # group the (point, index) memberships by index so every theta_k uses its neighbours
        pts, cols = np.nonzero(mask)
        keys = cands[pts, cols]
        order = np.lexsort(keys.T[::-1])
        pts, keys = pts[order], keys[order]
        if len(keys) == 0:
            return total
        brk = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
        for grp_pts, grp_keys in zip(np.split(pts, brk), np.split(keys, brk)):
            k = tuple(int(v) for v in grp_keys[0])
            p = xi[grp_pts]
            num = self.phi(p, k)
            nb = self.neighbours(k)
            den = np.sum(self._phi_many(p, np.broadcast_to(nb, (len(p),) + nb.shape)) ** 2, axis=1)
            np.add.at(total, grp_pts, num**2 / den)
        return total

    # -- neighbourhoods ---------------------------------------------------------
    def neighbours(self, k) -> np.ndarray:
        """All lattice indices (untruncated) whose support meets supp phi_k, shape (m, n)."""
        key = as_index(k)
        hit = self._nbr_cache.get(key)
        if hit is not None:
            return hit
        g = self.geometry
        reach = int(math.ceil(2 * SUPPORT_FACTOR * g.c1)) + 2
        offs = np.stack(
            [m.ravel() for m in np.meshgrid(*[np.arange(-reach, reach + 1)] * g.dim, indexing="ij")], axis=-1
        )
        cand = np.asarray(key)[None, :] + offs
        kk = np.asarray(key, dtype=float)
        dist = np.sqrt(np.sum((g.xi(cand) - g.xi(kk)) ** 2, axis=-1))
        ok = dist < SUPPORT_FACTOR * g.c1 * (g.r(cand) + float(g.r(kk)))
        if np.any(ok & (np.max(np.abs(offs), axis=1) == reach)):
            raise RuntimeError("neighbour search box too small")  # pragma: no cover
        out = cand[ok]
        self._nbr_cache[key] = out
        return out

    # -- grid blocks --------------------------------------------------------------
    def support_box(self, k, grid: Grid, factor: float = SUPPORT_FACTOR) -> tuple[tuple, tuple]:
        """(start, shape) of the centred-grid box covering ``B(xi_k, factor c1 r_k)``."""
        g = self.geometry
        kk = np.asarray(as_index(k), dtype=float)
        c = g.xi(kk)
        R = factor * g.c1 * float(g.r(kk))
        lo = np.ceil((c - R) / grid.dxi - 1e-9).astype(int) + grid.N // 2
        hi = np.floor((c + R) / grid.dxi + 1e-9).astype(int) + grid.N // 2
        if np.any(lo < 0) or np.any(hi >= grid.N):
            raise NyquistViolation(f"support of index {as_index(k)} exceeds the frequency grid")
        return tuple(int(v) for v in lo), tuple(int(v) for v in hi - lo + 1)

    def _box_points(self, start, shape, grid: Grid) -> np.ndarray:
        axes = [grid.dxi * (np.arange(s, s + m) - grid.N // 2) for s, m in zip(start, shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def phi_block(self, k, grid: Grid) -> FreqBlock:
        start, shape = self.support_box(k, grid)
        pts = self._box_points(start, shape, grid)
        return FreqBlock(start, self.phi(pts, k))

    def theta_block(self, k, grid: Grid) -> FreqBlock:
        """theta_k on its support box, normalised with every lattice neighbour."""
        start, shape = self.support_box(k, grid)
        pts = self._box_points(start, shape, grid).reshape(-1, self.geometry.dim)
        num = self.phi(pts, k)
        nb = self.neighbours(k)
        g = self.geometry
        den = np.zeros(len(pts))
        for l in nb:
            den += self.phi(pts, l) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(num > 0, num / np.sqrt(np.where(den > 0, den, 1.0)), 0.0)
        return FreqBlock(start, val.reshape(shape))


def unit_ball_mixed_norm(p: tuple) -> float:
    """Mixed (quasi-)norm of the indicator of the unit ball, exact up to quadrature."""
    c = 2.0 ** (1.0 / p[0])
    s = 1.0 / p[0]
    for pj in p[1:]:
        val, _ = integrate.quad(lambda t: (1.0 - t * t) ** (0.5 * s * pj), -1.0, 1.0, limit=200)
        c = (c**pj * val) ** (1.0 / pj)
        s += 1.0 / pj
    return c


@dataclass
class BapuReport:
    pu_max_err: float
    support_ok: bool
    bapu3_sup: float
    deriv_decay: dict
    bapu3_values: np.ndarray | None = None
    deriv_by_k: dict | None = None

    def to_json(self) -> dict:
        return {
            "pu_max_err": float(self.pu_max_err),
            "support_ok": bool(self.support_ok),
            "bapu3_sup": float(self.bapu3_sup),
            "deriv_decay": {str(k): float(v) for k, v in self.deriv_decay.items()},
        }


def _difference_quotients(system: BapuSystem, k, points: np.ndarray, order: int) -> np.ndarray:
    """Max over multi-indices of the given order of central difference quotients of phi_k."""
    g = system.geometry
    h = float(g.r(np.asarray(k, dtype=float))) / 64.0
    n = g.dim
    eye = np.eye(n) * h
    best = np.zeros(len(points))
    f = lambda p: system.phi(p, k)  # noqa: E731
    if order == 1:
        for d in range(n):
            q = (f(points + eye[d]) - f(points - eye[d])) / (2 * h)
            best = np.maximum(best, np.abs(q))
    elif order == 2:
        for d in range(n):
            for e in range(d, n):
                if d == e:
                    q = (f(points + eye[d]) - 2 * f(points) + f(points - eye[d])) / (h * h)
                else:
                    q = (
                        f(points + eye[d] + eye[e])
                        - f(points + eye[d] - eye[e])
                        - f(points - eye[d] + eye[e])
                        + f(points - eye[d] - eye[e])
                    ) / (4 * h * h)
                best = np.maximum(best, np.abs(q))
    else:
        raise PreconditionError("difference orders 1 and 2 only")
    return best


def certify_bapu(system: BapuSystem, p: PVec, grid: Grid, deriv_samples: int = 65) -> BapuReport:
    """Numerical BAPU certificate on ``grid``.

    Reports the partition-of-squares error on interior grid frequencies,
    exact support containment, the third BAPU quantity
    ``|Q_k|^{-1} ||1_{Q_k}||_{p~} ||F^{-1} phi_k||_{p~}`` (max over k), and
    difference-quotient decay ``|D^b phi_k| <xi>^{|b| alpha}`` for ``|b| <= 2``.
    """
    g = system.geometry
    n = g.dim
    if p.dim != n:
        raise PreconditionError("exponent vector dimension differs from the geometry")
    acc = np.zeros(grid.shape)
    support_ok = True
    pt = p.tilde()
    unit = unit_ball_mixed_norm(pt)
    sum_inv = sum(1.0 / v for v in pt)
    base = grid.freqs()
    bapu3 = np.zeros(len(system.ks))
    d1 = np.zeros(len(system.ks))
    d2 = np.zeros(len(system.ks))
    for i, k in enumerate(system.ks):
        kk = k.astype(float)
        rk = float(g.r(kk))
        th = system.theta_block(k, grid)
        ph = system.phi_block(k, grid)
        pts = system._box_points(th.start, th.shape, grid)
        outside = np.sqrt(np.sum((pts - g.xi(kk)) ** 2, axis=-1)) >= SUPPORT_FACTOR * g.c1 * rk
        if np.any(th.values[outside] != 0) or np.any(ph.values[outside] != 0):
            support_ok = False
        acc[th.slices()] += th.values**2
        # third BAPU quantity; spectrum anchored at xi_k (exact modulation covariance)
        bump = system.profile(np.sqrt(np.sum(base**2, axis=-1)) / (g.c1 * rk))
        band = grid.inverse(bump)
        rad = g.c1 * rk
        vol = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * rad**n
        bapu3[i] = unit * rad**sum_inv / vol * mixed_norm(band, pt, grid.h)
        # derivative decay on a sub-grid of the support box
        R = SUPPORT_FACTOR * g.c1 * rk
        ax = np.linspace(-R, R, deriv_samples)
        mesh = np.stack(np.meshgrid(*[ax] * n, indexing="ij"), axis=-1).reshape(-1, n) + g.xi(kk)
        wgt = bracket(mesh) ** g.alpha
        d1[i] = np.max(_difference_quotients(system, k, mesh, 1) * wgt)
        d2[i] = np.max(_difference_quotients(system, k, mesh, 2) * wgt**2)
    R_int = interior_half_width(g, system.truncation)
    inside = np.all(np.abs(base) <= R_int, axis=-1)
    pu_err = float(np.max(np.abs(acc[inside] - 1.0))) if np.any(inside) else float("nan")
    return BapuReport(
        pu_max_err=pu_err,
        support_ok=support_ok,
        bapu3_sup=float(bapu3.max()),
        deriv_decay={"1": float(d1.max()), "2": float(d2.max())},
        bapu3_values=bapu3,
        deriv_by_k={"1": d1, "2": d2},
    )
