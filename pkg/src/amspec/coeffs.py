"""Coefficient layouts and coefficient fields indexed by (k, l).

A :class:`Layout` fixes, for every frequency index k of a truncation, a box
of translation indices ``l_lo <= l_j < l_lo + count`` and the position of
that box in one flat vector.  Coefficient fields and operator matrices are
flat vectors / sparse matrices over such layouts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, IndexOutOfTruncation, PreconditionError
from .lattice import AlphaGeometry, TFIndex, Truncation, as_index


@dataclass(eq=False)
class Layout:
    """Flat ordering of the truncated index set {(k, l)}."""

    geometry: AlphaGeometry
    truncation: Truncation
    ks: np.ndarray  # (K, n) int
    ell_lo: np.ndarray  # (K,) int, same on every axis
    ell_count: np.ndarray  # (K,) int
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.geometry.dim
        sizes = self.ell_count.astype(np.int64) ** n
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self._pos = {tuple(int(v) for v in k): i for i, k in enumerate(self.ks)}

    @classmethod
    def build(cls, geometry: AlphaGeometry, truncation: Truncation) -> "Layout":
        ks = truncation.freq_indices(geometry.dim)
        lo, cnt = zip(*(truncation.ell_range(k, geometry) for k in ks))
        return cls(geometry, truncation, ks, np.array(lo, dtype=np.int64), np.array(cnt, dtype=np.int64))

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def key(self) -> tuple:
        return (self.geometry, self.truncation, self.ks.tobytes(), self.ell_lo.tobytes(), self.ell_count.tobytes())

    def same_as(self, other: "Layout") -> bool:
        return self is other or self.key() == other.key()

    def kpos(self, k) -> int:
        key = as_index(k)
        try:
            return self._pos[key]
        except KeyError:
            raise IndexOutOfTruncation(f"frequency index {key} outside |k|_inf <= {self.truncation.kmax}") from None

    def block_shape(self, i: int) -> tuple:
        return (int(self.ell_count[i]),) * self.dim

    def flat(self, kl) -> int:
        """Position of (k, l) in the flat vector."""
        k, ell = kl
        i = self.kpos(k)
        ell = np.asarray(as_index(ell)) - self.ell_lo[i]
        if np.any(ell < 0) or np.any(ell >= self.ell_count[i]):
            raise IndexOutOfTruncation(f"translation index {as_index(kl[1])} outside the range of k={as_index(k)}")
        return int(self.offsets[i] + np.ravel_multi_index(tuple(ell), self.block_shape(i)))

    def ells(self, i: int) -> np.ndarray:
        """All translation indices of block i, (count^n, n), C order."""
        ax = [np.arange(self.ell_lo[i], self.ell_lo[i] + self.ell_count[i])] * self.dim
        mesh = np.meshgrid(*ax, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def k_of(self) -> np.ndarray:
        """Block number of every flat position."""
        if not hasattr(self, "_k_of"):
            self._k_of = np.repeat(np.arange(len(self.ks)), np.diff(self.offsets))
        return self._k_of

    @property
    def ell_of(self) -> np.ndarray:
        """Translation index of every flat position, (size, n)."""
        if not hasattr(self, "_ell_of"):
            self._ell_of = np.concatenate([self.ells(i) for i in range(len(self.ks))], axis=0)
        return self._ell_of

    def r_of(self) -> np.ndarray:
        return self.geometry.r(self.ks.astype(float))[self.k_of]

    def xi_of(self) -> np.ndarray:
        return self.geometry.xi(self.ks.astype(float))[self.k_of]

    def x_of(self) -> np.ndarray:
        return self.geometry.x(self.ks.astype(float)[self.k_of], self.ell_of.astype(float))


@dataclass
class CoeffField:
    """Complex coefficients over a :class:`Layout` (a flat vector)."""

    layout: Layout
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex).ravel()
        if d.size != self.layout.size:
            raise DimensionMismatch(f"{d.size} coefficients for a layout of size {self.layout.size}")
        if not np.all(np.isfinite(d)):
            raise PreconditionError("coefficient field contains non-finite entries")
        self.data = d

    @classmethod
    def zeros(cls, layout: Layout) -> "CoeffField":
        return cls(layout, np.zeros(layout.size, dtype=complex))

    @classmethod
    def delta(cls, layout: Layout, kl) -> "CoeffField":
        c = cls.zeros(layout)
        c.data[layout.flat(kl)] = 1.0
        return c

    def block(self, i: int) -> np.ndarray:
        """Coefficients of frequency block i shaped (count,)*n."""
        lo, hi = self.layout.offsets[i], self.layout.offsets[i + 1]
        return self.data[lo:hi].reshape(self.layout.block_shape(i))

    def __getitem__(self, kl) -> complex:
        return complex(self.data[self.layout.flat(kl)])

    def __setitem__(self, kl, value) -> None:
        self.data[self.layout.flat(kl)] = value

    def _check(self, other: "CoeffField") -> None:
        if not self.layout.same_as(other.layout):
            raise DimensionMismatch("coefficient fields over different layouts")

    def __add__(self, other: "CoeffField") -> "CoeffField":
        self._check(other)
        return CoeffField(self.layout, self.data + other.data)

    def __sub__(self, other: "CoeffField") -> "CoeffField":
        self._check(other)
        return CoeffField(self.layout, self.data - other.data)

    def __mul__(self, c: complex) -> "CoeffField":
        return CoeffField(self.layout, c * self.data)

    __rmul__ = __mul__

    def l2(self) -> float:
        return float(np.linalg.norm(self.data))

    def items(self):
        """Iterate over nonzero ((k, l), value) pairs."""
        for pos in np.flatnonzero(self.data):
            i = self.layout.k_of[pos]
            yield TFIndex(as_index(self.layout.ks[i]), as_index(self.layout.ell_of[pos])), complex(self.data[pos])

    # -- file format: k1..kn, l1..ln, re, im ------------------------------------
    def save_csv(self, path: str | Path, nonzero_only: bool = True) -> None:
        n = self.layout.dim
        hdr = [f"k{i + 1}" for i in range(n)] + [f"l{i + 1}" for i in range(n)] + ["re", "im"]
        pos = np.flatnonzero(self.data) if nonzero_only else np.arange(self.layout.size)
        ks = self.layout.ks[self.layout.k_of[pos]]
        ells = self.layout.ell_of[pos]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(hdr)
            for k, ell, v in zip(ks, ells, self.data[pos]):
                w.writerow([*map(int, k), *map(int, ell), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def load_csv(cls, path: str | Path, layout: Layout) -> "CoeffField":
        n = layout.dim
        out = cls.zeros(layout)
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows, None)
            if header is None or len(header) != 2 * n + 2:
                raise PreconditionError(f"{path}: expected {2 * n + 2} columns k..,l..,re,im")
            for row in rows:
                if not row:
                    continue
                vals = [int(v) for v in row[: 2 * n]]
                out[(tuple(vals[:n]), tuple(vals[n:]))] = float(row[2 * n]) + 1j * float(row[2 * n + 1])
        return out
