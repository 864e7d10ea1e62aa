"""Alpha-covering geometry: scales, centres, lattices, covers and truncation.

The frequency lattice is indexed by ``k`` in Z^n with

    r_k  = <k>^{alpha/(1-alpha)},      <k> = (1 + |k|^2)^{1/2}
    xi_k = k * r_k                      (ball centres)
    x_{k,l} = (pi/a) * l / r_k          (space lattice attached to k)

Balls ``B(xi_k, c1 r_k)`` form the frequency cover and the direct-space balls
``Q(k,l) = B(-x_{k,l}, 1/r_k)`` tile space at scale ``1/r_k``.

All functions accept single indices (tuples or 1-D arrays) or stacks of
indices with the lattice coordinate on the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CoverageGap, PreconditionError

C1_GRID: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0)
A_SLACK = 1.0 + 1.0 / 16.0

# relative tolerance used when deciding closed-ball membership
_MEMBERSHIP_RTOL = 1e-12


class TFIndex(NamedTuple):
    """Time-frequency label ``(k, ell)`` with integer vectors of length n."""

    k: tuple
    ell: tuple


def as_index(k) -> tuple:
    """Normalise a scalar / sequence into a tuple of Python ints."""
    arr = np.atleast_1d(np.asarray(k))
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        if np.all(np.mod(arr, 1) == 0):
            arr = arr.astype(np.int64)
        else:
            raise PreconditionError(f"lattice index must be integral, got {k!r}")
    return tuple(int(v) for v in arr)


def bracket(v) -> np.ndarray:
    """Japanese bracket <v> = (1+|v|^2)^{1/2} over the last axis."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


@dataclass(frozen=True)
class AlphaGeometry:
    """Constants of the alpha-covering.

    Parameters
    ----------
    alpha : float
        Interpolation parameter in [0, 1).
    dim : int
        Space dimension n.
    c1 : float
        Radius factor of the cover balls ``B(xi_k, c1 r_k)``.
    a : float
        Modulation step constant; must satisfy ``a >= max(2 c1, pi sqrt(n)/2)``.
    """

    alpha: float
    dim: int
    c1: float
    a: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise PreconditionError(f"alpha must lie in [0,1), got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise PreconditionError(f"dim must be a positive integer, got {self.dim}")
        if not self.c1 > 0:
            raise PreconditionError(f"c1 must be positive, got {self.c1}")
        amin = max(2.0 * self.c1, math.pi * math.sqrt(self.dim) / 2.0)
        if self.a < amin * (1.0 - 1e-12):
            raise PreconditionError(f"a={self.a} violates a >= max(2 c1, pi sqrt(n)/2) = {amin}")

    @property
    def exponent(self) -> float:
        """The scale exponent alpha/(1-alpha)."""
        return self.alpha / (1.0 - self.alpha)

    # -- vectorised accessors -------------------------------------------------
    def r(self, k) -> np.ndarray:
        """r_k for an index or a stack of indices (last axis = coordinates)."""
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            k = k[None]
        return bracket(k) ** self.exponent

    def xi(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            k = k[None]
        return k * self.r(k)[..., None]

    def x(self, k, ell) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        ell = np.asarray(ell, dtype=float)
        if k.ndim == 0:
            k = k[None]
        if ell.ndim == 0:
            ell = ell[None]
        return (math.pi / self.a) * ell / self.r(k)[..., None]

    def step(self, k) -> np.ndarray:
        """Spacing pi/(a r_k) of the space lattice attached to k."""
        return math.pi / (self.a * self.r(k))


def default_a(c1: float, dim: int, T: float | None = None) -> float:
    """Modulation constant ``max(2 c1, pi sqrt(n)/2) (1 + 1/16)``.

    When a domain half width ``T`` is given, the value is rounded up to the
    next multiple of ``pi/T``.  The space lattice of every index with
    ``r_k = 1`` then has exactly ``2 a T / pi`` (an even integer) points per
    period of the sampling torus, which makes the discrete frame exactly tight
    for those indices (all indices when alpha = 0).
    """
    a = max(2.0 * c1, math.pi * math.sqrt(dim) / 2.0) * A_SLACK
    if T is not None:
        unit = math.pi / T
        a = unit * math.ceil(a / unit - 1e-9)
    return a


def r_of(k, geom: AlphaGeometry) -> float:
    """Scale r_k = <k>^{alpha/(1-alpha)}."""
    return float(geom.r(np.asarray(as_index(k), dtype=float)))


def xi_of(k, geom: AlphaGeometry) -> np.ndarray:
    """Ball centre xi_k = k r_k."""
    return geom.xi(np.asarray(as_index(k), dtype=float))


def x_of(kl: TFIndex, geom: AlphaGeometry) -> np.ndarray:
    """Space lattice point x_{k,l} = (pi/a) l / r_k."""
    return geom.x(np.asarray(as_index(kl[0]), dtype=float), np.asarray(as_index(kl[1]), dtype=float))


def qball(kl: TFIndex, geom: AlphaGeometry) -> tuple[np.ndarray, float]:
    """Direct-space ball Q(k,l) = B(-x_{k,l}, 1/r_k) as (centre, radius)."""
    k = as_index(kl[0])
    return -x_of(kl, geom), 1.0 / r_of(k, geom)


@dataclass(frozen=True)
class Truncation:
    """Finite section of the lattices.

    ``kmax`` bounds ``|k|_inf``; for each k the translation index runs over
    ``-ellmax(k) <= l_j < ellmax(k)`` with ``ellmax(k) = ceil(a r_k T/pi) + margin``
    so that the points x_{k,l} cover [-T, T)^n once (plus ``margin`` extra
    points on each side).
    """

    kmax: int
    T: float
    margin: int = 0

    def __post_init__(self):
        if int(self.kmax) != self.kmax or self.kmax < 0:
            raise PreconditionError(f"kmax must be a non-negative integer, got {self.kmax}")
        if not self.T > 0:
            raise PreconditionError(f"T must be positive, got {self.T}")
        if self.margin < 0:
            raise PreconditionError("margin must be non-negative")

    def freq_indices(self, dim: int) -> np.ndarray:
        """All k with |k|_inf <= kmax, lexicographic order, shape (K, n)."""
        axes = [np.arange(-self.kmax, self.kmax + 1)] * dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1).astype(np.int64)

    def contains(self, k) -> bool:
        return bool(np.max(np.abs(np.asarray(k))) <= self.kmax)

    def ellmax(self, k, geom: AlphaGeometry) -> int:
        v = geom.a * r_of(k, geom) * self.T / math.pi
        return int(math.ceil(v - 1e-9)) + self.margin

    def ell_range(self, k, geom: AlphaGeometry) -> tuple[int, int]:
        """(first l, count) along every axis for frequency index k."""
        e = self.ellmax(k, geom)
        return -e, 2 * e

    def doubled(self) -> "Truncation":
        return Truncation(2 * self.kmax, self.T, self.margin)


def ball_cover(geom: AlphaGeometry, trunc: Truncation) -> list[tuple[np.ndarray, float]]:
    """Truncated cover ``{B(xi_k, c1 r_k) : |k|_inf <= kmax}``."""
    if trunc.kmax < 0:
        raise PreconditionError("empty truncation")
    ks = trunc.freq_indices(geom.dim)
    centres = geom.xi(ks)
    radii = geom.c1 * geom.r(ks)
    return [(c, float(r)) for c, r in zip(centres, radii)]


def interior_half_width(geom: AlphaGeometry, trunc: Truncation) -> float:
    """Half width of the certified interior box.

    This is the box reached by the truncated cover, ``kmax r_{kmax e_1}``,
    minus a boundary collar ``2 c1 r_{kmax e_1}``.  Inside it every ball that
    meets a point belongs to the truncation.
    """
    e1 = np.zeros(geom.dim)
    e1[0] = trunc.kmax
    rk = float(geom.r(e1))
    return (trunc.kmax - 2.0 * geom.c1) * rk


def outer_half_width(geom: AlphaGeometry, trunc: Truncation, factor: float = 1.5) -> float:
    """Largest |xi|_inf reached by the supports ``B(xi_k, factor c1 r_k)``."""
    ks = trunc.freq_indices(geom.dim)
    r = geom.r(ks)
    return float(np.max(np.max(np.abs(geom.xi(ks)), axis=-1) + factor * geom.c1 * r))


def index_candidates(geom: AlphaGeometry, xi: np.ndarray, reach: int) -> np.ndarray:
    """Lattice indices k that may own balls near the points ``xi``.

    Returns an integer array of shape (P, C, n): for every point a box of
    ``(2 reach + 1)^n`` indices around the approximate inverse of k -> xi_k.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    e = geom.exponent
    rad = np.sqrt(np.sum(xi * xi, axis=-1))
    # invert t -> t (1+t^2)^{e/2} radially by Newton iterations from t = rad
    t = rad / (1.0 + rad * rad) ** (e / 2.0) if e > 0 else rad.copy()
    for _ in range(60):
        if e == 0:
            break
        g = t * (1.0 + t * t) ** (e / 2.0) - rad
        dg = (1.0 + t * t) ** (e / 2.0 - 1.0) * (1.0 + (1.0 + e) * t * t)
        t = np.maximum(t - g / dg, 0.0)
    r_est = (1.0 + t * t) ** (e / 2.0)
    k0 = np.rint(xi / r_est[:, None]).astype(np.int64)
    offs = np.stack(
        [m.ravel() for m in np.meshgrid(*[np.arange(-reach, reach + 1)] * geom.dim, indexing="ij")],
        axis=-1,
    )
    return k0[:, None, :] + offs[None, :, :]


def _search_reach(geom: AlphaGeometry, factor: float) -> int:
    return int(math.ceil(2.0 * factor * geom.c1)) + 2


def covering_members(geom: AlphaGeometry, xi: np.ndarray, factor: float = 1.0, kmax: int | None = None):
    """Indices whose balls ``B(xi_k, factor c1 r_k)`` (closed) contain each point.

    Returns ``(cands, mask)`` with ``cands`` of shape (P, C, n) and a boolean
    membership mask of shape (P, C).  Indices outside ``|k|_inf <= kmax`` are
    masked out when ``kmax`` is given.
    """
    reach = _search_reach(geom, factor)
    cands = index_candidates(geom, xi, reach)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    r = geom.r(cands)
    d = np.sqrt(np.sum((geom.xi(cands) - xi[:, None, :]) ** 2, axis=-1))
    rad = factor * geom.c1 * r
    mask = d <= rad * (1.0 + _MEMBERSHIP_RTOL)
    # the search box must be large enough: no member may sit on its boundary shell
    shell = np.any(np.abs(cands - np.rint(np.mean(cands, axis=1, keepdims=True))) == reach, axis=-1)
    if np.any(mask & shell):
        raise RuntimeError("candidate search box too small; increase reach")  # pragma: no cover
    if kmax is not None:
        mask &= np.max(np.abs(cands), axis=-1) <= kmax
    return cands, mask


@dataclass
class CoverReport:
    """Outcome of :func:`certify_covering`."""

    n0: int
    coverage_ok: bool
    size_ratio_min: float
    size_ratio_max: float
    c1: float
    a: float
    shape_ratio: float = 1.0
    probes: int = 0
    interior_half_width: float = 0.0

    def to_json(self) -> dict:
        return {
            "n0": int(self.n0),
            "coverage_ok": bool(self.coverage_ok),
            "size_ratio_min": float(self.size_ratio_min),
            "size_ratio_max": float(self.size_ratio_max),
            "c1": float(self.c1),
            "a": float(self.a),
        }


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def probe_points(half_width: float, resolution: float, dim: int) -> np.ndarray:
    """Grid ``resolution * Z^n`` restricted to the box ``[-half_width, half_width]^n``."""
    m = int(math.floor(half_width / resolution + 1e-9))
    axis = resolution * np.arange(-m, m + 1)
    mesh = np.meshgrid(*[axis] * dim, indexing="ij")
    return np.stack([v.ravel() for v in mesh], axis=-1)


def certify_covering(
    geom: AlphaGeometry,
    trunc: Truncation,
    probe_resolution: float | None = None,
    chunk: int = 20000,
) -> CoverReport:
    """Brute-force certificate that the truncated ball family covers its interior.

    Probes the grid ``probe_resolution * Z^n`` inside the interior box
    (see :func:`interior_half_width`), counts the closed balls containing
    each probe, and records ``|B| / <xi>^{alpha n}`` for every containing ball.

    Raises
    ------
    CoverageGap
        If some probe lies in no ball; ``err.points`` lists offenders.
    """
    if probe_resolution is None:
        probe_resolution = geom.c1 / (64.0 if geom.dim == 1 else 8.0)
    if not probe_resolution > 0:
        raise PreconditionError("probe_resolution must be positive")
    R = interior_half_width(geom, trunc)
    if R <= 0:
        raise PreconditionError(f"truncation kmax={trunc.kmax} leaves no interior region for c1={geom.c1}")
    pts = probe_points(R, probe_resolution, geom.dim)
    n0 = 0
    smin, smax = math.inf, 0.0
    gaps = []
    vol = unit_ball_volume(geom.dim)
    for s in range(0, len(pts), chunk):
        p = pts[s : s + chunk]
        cands, mask = covering_members(geom, p, 1.0, trunc.kmax)
        counts = mask.sum(axis=1)
        n0 = max(n0, int(counts.max(initial=0)))
        if np.any(counts == 0):
            gaps.append(p[counts == 0][:10])
        size = vol * (geom.c1 * geom.r(cands)) ** geom.dim
        ratio = size / bracket(p)[:, None] ** (geom.alpha * geom.dim)
        if np.any(mask):
            smin = min(smin, float(ratio[mask].min()))
            smax = max(smax, float(ratio[mask].max()))
    if gaps:
        g = np.concatenate(gaps)[:10]
        raise CoverageGap(
            f"{len(g)}+ interior probe points uncovered (c1={geom.c1}); first: {g[0].tolist()}",
            points=g,
        )
    return CoverReport(
        n0=n0,
        coverage_ok=True,
        size_ratio_min=smin,
        size_ratio_max=smax,
        c1=geom.c1,
        a=geom.a,
        probes=len(pts),
        interior_half_width=R,
    )


def select_c1(
    alpha: float,
    dim: int,
    kmax: int,
    T: float | None = None,
    grid: Sequence[float] = C1_GRID,
    probe_resolution: float | None = None,
) -> AlphaGeometry:
    """Smallest c1 from ``grid`` whose cover passes :func:`certify_covering`."""
    last: Exception | None = None
    for c1 in grid:
        geom = AlphaGeometry(alpha, dim, c1, default_a(c1, dim, T))
        try:
            certify_covering(geom, Truncation(kmax, T if T is not None else 1.0), probe_resolution)
        except (CoverageGap, PreconditionError) as err:
            last = err
            continue
        return geom
    raise CoverageGap(f"no c1 in {tuple(grid)} covers the interior: {last}")


def qball_overlap(geom: AlphaGeometry, k, T: float, resolution: float | None = None) -> int:
    """Max over probe points x of the number of balls Q(k, l) containing x."""
    k = as_index(k)
    rk = r_of(k, geom)
    step = geom.step(np.asarray(k, dtype=float))
    if resolution is None:
        resolution = 1.0 / (64.0 * rk)
    # probe one lattice cell in every axis (the pattern is periodic in l)
    m = int(math.ceil(float(step) / resolution))
    axis = resolution * np.arange(0, m + 1)
    mesh = np.meshgrid(*[axis] * geom.dim, indexing="ij")
    pts = np.stack([v.ravel() for v in mesh], axis=-1)
    reach = int(math.ceil(1.0 / (rk * float(step)))) + 1
    offs = np.stack(
        [v.ravel() for v in np.meshgrid(*[np.arange(-reach, reach + 1)] * geom.dim, indexing="ij")], axis=-1
    )
    centres = -offs * float(step)
    d = np.sqrt(np.sum((pts[:, None, :] - centres[None, :, :]) ** 2, axis=-1))
    return int(np.max(np.sum(d <= (1.0 / rk) * (1 + _MEMBERSHIP_RTOL), axis=1)))
