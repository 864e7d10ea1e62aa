"""Uniform sampling grids, sampled signals and the discrete Fourier convention.

Space samples live at ``x_i = -T + i h`` (``h = 2T/N``) on every axis and the
frequency grid is ``xi_j = (j - N/2) * pi/T`` stored in centred order.  The
transform pair is the rectangle-rule discretisation of the unitary Fourier
transform with the ``(2 pi)^{-n/2}`` normalisation:

    fhat(xi_j) = (2 pi)^{-n/2} h^n       sum_i f(x_i) exp(-i x_i . xi_j)
    f(x_i)     = (2 pi)^{-n/2} dxi^n     sum_j fhat(xi_j) exp(+i x_i . xi_j)

which satisfies ``h^n sum |f|^2 = dxi^n sum |fhat|^2`` exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NyquistViolation, PreconditionError

SIGNAL_MAGIC = b"AMSIG1"
_HEADER = struct.Struct("<8sqqd")  # magic (padded), n, N, T -> 32 bytes


@dataclass(frozen=True)
class Grid:
    """Box grid ``[-T, T)^n`` with ``N`` samples per axis (N a power of two)."""

    dim: int
    T: float
    N: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise PreconditionError(f"dim must be a positive integer, got {self.dim}")
        if not self.T > 0:
            raise PreconditionError(f"T must be positive, got {self.T}")
        if self.N < 2 or (self.N & (self.N - 1)) != 0:
            raise PreconditionError(f"N must be a power of two >= 2, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.T / self.N

    @property
    def dxi(self) -> float:
        return math.pi / self.T

    @property
    def reach(self) -> float:
        """Largest representable frequency pi/h."""
        return math.pi / self.h

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def x1(self) -> np.ndarray:
        return -self.T + self.h * np.arange(self.N)

    @property
    def xi1(self) -> np.ndarray:
        return self.dxi * (np.arange(self.N) - self.N // 2)

    def coords(self) -> np.ndarray:
        """Space coordinates, shape (N,...,N, n)."""
        mesh = np.meshgrid(*[self.x1] * self.dim, indexing="ij")
        return np.stack(mesh, axis=-1)

    def freqs(self) -> np.ndarray:
        """Frequency coordinates (centred order), shape (N,...,N, n)."""
        mesh = np.meshgrid(*[self.xi1] * self.dim, indexing="ij")
        return np.stack(mesh, axis=-1)

    def refined(self) -> "Grid":
        """Same box, twice the samples per axis."""
        return Grid(self.dim, self.T, 2 * self.N)

    def check_reach(self, outer: float, factor: float = 1.25) -> None:
        """Raise :class:`NyquistViolation` unless ``pi/h >= factor * outer``."""
        if self.reach < factor * outer * (1 - 1e-12):
            raise NyquistViolation(
                f"grid reach pi/h={self.reach:.4g} below {factor} x outer radius {outer:.4g}; "
                f"need N >= {int(2 ** math.ceil(math.log2(factor * outer * 2 * self.T / math.pi)))}"
            )

    def freq_index(self, xi: float) -> int:
        """Centred-order index of the frequency grid point nearest to ``xi``."""
        return int(round(xi / self.dxi)) + self.N // 2

    # -- transforms -----------------------------------------------------------
    def _sign(self) -> np.ndarray:
        s1 = np.where((np.arange(self.N) - self.N // 2) % 2 == 0, 1.0, -1.0)
        s = s1
        for _ in range(self.dim - 1):
            s = np.multiply.outer(s, s1)
        return s

    def _axes(self, values: np.ndarray) -> tuple[int, ...]:
        if values.shape[values.ndim - self.dim :] != self.shape:
            raise DimensionMismatch(f"array shape {values.shape} incompatible with grid {self.shape}")
        return tuple(range(values.ndim - self.dim, values.ndim))

    def fourier(self, values: np.ndarray) -> np.ndarray:
        """Samples -> spectrum on the centred frequency grid (batched on leading axes)."""
        values = np.asarray(values)
        axes = self._axes(values)
        F = np.fft.fftshift(np.fft.fftn(values, axes=axes), axes=axes)
        scale = (2.0 * math.pi) ** (-self.dim / 2.0) * self.h**self.dim
        return scale * self._sign() * F

    def inverse(self, spectrum: np.ndarray) -> np.ndarray:
        """Spectrum on the centred frequency grid -> samples."""
        spectrum = np.asarray(spectrum)
        axes = self._axes(spectrum)
        G = np.fft.ifftn(np.fft.ifftshift(self._sign() * spectrum, axes=axes), axes=axes)
        scale = (2.0 * math.pi) ** (-self.dim / 2.0) * (self.dxi * self.N) ** self.dim
        return scale * G


@dataclass
class SampledSignal:
    """Complex samples of a function on a :class:`Grid` (axis order x_1..x_n)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            if v.size == self.grid.N**self.grid.dim:
                v = v.reshape(self.grid.shape)
            else:
                raise DimensionMismatch(f"{v.size} values do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("signal contains non-finite samples")
        self.values = v

    @classmethod
    def zeros(cls, grid: Grid) -> "SampledSignal":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray) -> "SampledSignal":
        return cls(grid, grid.inverse(spectrum))

    def spectrum(self) -> np.ndarray:
        return self.grid.fourier(self.values)

    def norm(self) -> float:
        """Discrete L2 norm ``(h^n sum |f|^2)^{1/2}``."""
        return float(np.sqrt(self.grid.h**self.grid.dim * np.sum(np.abs(self.values) ** 2)))

    def inner(self, other: "SampledSignal") -> complex:
        """``<self, other> = h^n sum self * conj(other)``."""
        _same_grid(self, other)
        return complex(self.grid.h**self.grid.dim * np.vdot(other.values, self.values))

    def __add__(self, other: "SampledSignal") -> "SampledSignal":
        _same_grid(self, other)
        return SampledSignal(self.grid, self.values + other.values)

    def __sub__(self, other: "SampledSignal") -> "SampledSignal":
        _same_grid(self, other)
        return SampledSignal(self.grid, self.values - other.values)

    def __mul__(self, c: complex) -> "SampledSignal":
        return SampledSignal(self.grid, c * self.values)

    __rmul__ = __mul__

    # -- file formats ---------------------------------------------------------
    def save(self, path: str | Path) -> None:
        """Write CSV (``.csv``) or the binary ``AMSIG1`` format (any other suffix)."""
        path = Path(path)
        flat = self.values.ravel()
        if path.suffix.lower() == ".csv":
            data = np.column_stack([flat.real, flat.imag])
            np.savetxt(path, data, delimiter=",", header="re,im", comments="", fmt="%.17g")
        else:
            header = _HEADER.pack(SIGNAL_MAGIC.ljust(8, b"\0"), self.grid.dim, self.grid.N, float(self.grid.T))
            inter = np.empty(2 * flat.size, dtype="<f8")
            inter[0::2] = flat.real
            inter[1::2] = flat.imag
            path.write_bytes(header + inter.tobytes())

    @classmethod
    def load(cls, path: str | Path, grid: Grid | None = None) -> "SampledSignal":
        """Read either format; CSV files need the ``grid`` to be supplied."""
        path = Path(path)
        if path.suffix.lower() == ".csv":
            if grid is None:
                raise PreconditionError("CSV signals carry no grid metadata; pass grid")
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            if data.shape[1] != 2:
                raise PreconditionError(f"{path}: expected columns re,im")
            return cls(grid, data[:, 0] + 1j * data[:, 1])
        raw = path.read_bytes()
        if len(raw) < _HEADER.size or not raw.startswith(SIGNAL_MAGIC):
            raise PreconditionError(f"{path}: not an AMSIG1 signal file")
        _, n, N, T = _HEADER.unpack(raw[: _HEADER.size])
        file_grid = Grid(int(n), float(T), int(N))
        if grid is not None and grid != file_grid:
            raise DimensionMismatch(f"{path}: file grid {file_grid} differs from requested {grid}")
        inter = np.frombuffer(raw[_HEADER.size :], dtype="<f8")
        if inter.size != 2 * N**n:
            raise PreconditionError(f"{path}: truncated sample block")
        return cls(file_grid, inter[0::2] + 1j * inter[1::2])


def _same_grid(f: SampledSignal, g: SampledSignal) -> None:
    if f.grid != g.grid:
        raise DimensionMismatch(f"signals on different grids: {f.grid} vs {g.grid}")
