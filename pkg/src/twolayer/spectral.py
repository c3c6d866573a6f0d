"""Periodic pseudospectral core.

Fields live on a uniform tensor grid of the torus ``prod_i [0, L_i)``.
Transforms are real FFTs over the trailing ``dim`` axes, so every helper
accepts arrays with arbitrary leading (batch) axes.

Conventions
-----------
* wavenumbers are integer multiples of ``2*pi/L_i``;
* the Nyquist mode is zeroed whenever an odd symbol (``i k``) is applied;
* quadratic products are de-aliased with the 2/3 rule on both factors and
  on the result;
* ``sobolev_norm(f, 0)`` equals the quadrature L2 norm.

Binary dump layout (little endian)::

    4s   magic  b"TWLF"
    u4   version (1)
    u4   dim
    u4   ncomp      (1 for scalars, dim for vectors, nlev for strips)
    u4   points[dim]
    f8   lengths[dim]
    f8   samples[ncomp, points[0], ..., points[dim-1]]   (C order)
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from numbers import Number
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

DEFAULT_POINTS = {1: 128, 2: 48}
BINARY_MAGIC = b"TWLF"
BINARY_VERSION = 1


class GridError(ValueError):
    """Invalid grid construction or incompatible grids."""


class SymbolError(ValueError):
    """Non-finite Fourier symbol."""


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid with cached wavenumber arrays."""

    dim: int
    lengths: tuple
    points: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim or len(self.points) != self.dim:
            raise GridError("lengths and points must have one entry per dimension")
        for n in self.points:
            if int(n) != n or n < 8 or n % 2:
                raise GridError(f"point counts must be even and >= 8, got {n}")
        for length in self.lengths:
            if not (length > 0 and math.isfinite(length)):
                raise GridError(f"lengths must be positive and finite, got {length}")

    # -- geometry -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return tuple(int(n) for n in self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return self.measure / self.size

    @cached_property
    def axes(self) -> tuple:
        """1-D coordinate arrays ``x_i = j * L_i / N_i``."""
        return tuple(
            np.arange(n) * (length / n) for n, length in zip(self.shape, self.lengths)
        )

    @cached_property
    def mesh(self) -> np.ndarray:
        """Coordinates as an array of shape ``(dim, *points)``."""
        return np.array(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple:
        """Full (two-sided) wavenumber arrays per axis, in FFT order."""
        return tuple(
            np.fft.fftfreq(n, d=length / n) * 2 * np.pi
            for n, length in zip(self.shape, self.lengths)
        )

    # -- half spectrum used by the real transforms -----------------------
    @cached_property
    def _mode_index(self) -> tuple:
        idx = []
        for axis, n in enumerate(self.shape):
            if axis == self.dim - 1:
                ni = np.fft.rfftfreq(n, d=1.0 / n)
            else:
                ni = np.fft.fftfreq(n, d=1.0 / n)
            sh = [1] * self.dim
            sh[axis] = ni.size
            idx.append(np.rint(ni).astype(int).reshape(sh))
        return tuple(idx)

    @cached_property
    def spectral_shape(self) -> tuple:
        return tuple(self.shape[:-1]) + (self.shape[-1] // 2 + 1,)

    @cached_property
    def k(self) -> np.ndarray:
        """Wavevector on the half spectrum, shape ``(dim, *spectral_shape)``."""
        out = np.zeros((self.dim,) + self.spectral_shape)
        for axis, (ni, length) in enumerate(zip(self._mode_index, self.lengths)):
            out[axis] = ni * (2 * np.pi / length)
        return out

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(np.sum(self.k**2, axis=0))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def zero_mode(self) -> np.ndarray:
        return self.kabs == 0

    @cached_property
    def nyquist(self) -> np.ndarray:
        mask = np.zeros(self.spectral_shape, dtype=bool)
        for ni, n in zip(self._mode_index, self.shape):
            mask |= np.abs(ni) == n // 2
        return mask

    @cached_property
    def dealias(self) -> np.ndarray:
        """2/3-rule mask: keep modes with ``|n_i| <= N_i / 3`` on every axis."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for ni, n in zip(self._mode_index, self.shape):
            mask &= np.abs(ni) <= n // 3
        return mask

    # -- transforms -----------------------------------------------------
    @property
    def _fft_axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(values, axes=self._fft_axes)

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(coeffs, s=self.shape, axes=self._fft_axes)

    # -- construction helpers -------------------------------------------
    def scalar(self, values) -> "ScalarField":
        return ScalarField(self, np.broadcast_to(np.asarray(values, float), self.shape).copy())

    def vector(self, values) -> "VectorField":
        values = np.asarray(values, float)
        return VectorField(self, np.broadcast_to(values, (self.dim,) + self.shape).copy())

    def sample(self, func: Callable) -> "ScalarField":
        """Evaluate ``func(*coordinates)`` on the grid."""
        return self.scalar(func(*self.mesh))


def make_grid(dim: int, lengths: Sequence[float] | None = None,
              points: Sequence[int] | None = None) -> SpectralGrid:
    """Build a periodic grid.

    Args:
        dim: 1 or 2.
        lengths: period per axis (default ``2*pi``).
        points: even sample count per axis, at least 8 (default 128 in 1-D,
            48 per axis in 2-D).
    """
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if lengths is None:
        lengths = [2 * np.pi] * dim
    if points is None:
        points = [DEFAULT_POINTS[dim]] * dim
    lengths = tuple(float(x) for x in np.atleast_1d(lengths))
    points = tuple(int(n) if float(n) == int(n) else n for n in np.atleast_1d(points))
    return SpectralGrid(dim, lengths, points)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a scalar function on a ``SpectralGrid``."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise GridError(f"scalar values have shape {self.values.shape}, "
                            f"grid expects {self.grid.shape}")

    @property
    def hat(self) -> np.ndarray:
        return self.grid.fft(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            return ScalarField(self.grid, op(self.values, other.values))
        if isinstance(other, Number):
            return ScalarField(self.grid, op(self.values, float(other)))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        if isinstance(other, Number):
            return ScalarField(self.grid, self.values * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Number):
            return ScalarField(self.grid, self.values / float(other))
        return NotImplemented

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Real samples of a ``dim``-vector field, stored as ``(dim, *points)``."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        want = (self.grid.dim,) + self.grid.shape
        if self.values.shape != want:
            raise GridError(f"vector values have shape {self.values.shape}, grid expects {want}")

    @property
    def components(self) -> tuple:
        return tuple(ScalarField(self.grid, c) for c in self.values)

    @property
    def hat(self) -> np.ndarray:
        return self.grid.fft(self.values)

    @property
    def mean(self) -> np.ndarray:
        return np.mean(self.values, axis=tuple(range(1, self.values.ndim)))

    def sup(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.values**2, axis=0))))

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.values.copy())

    def _combine(self, other, op):
        if isinstance(other, VectorField):
            _check_same_grid(self, other)
            return VectorField(self.grid, op(self.values, other.values))
        if isinstance(other, Number):
            return VectorField(self.grid, op(self.values, float(other)))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        if isinstance(other, Number):
            return VectorField(self.grid, self.values * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Number):
            return VectorField(self.grid, self.values / float(other))
        return NotImplemented

    def __neg__(self):
        return VectorField(self.grid, -self.values)


Field = Union[ScalarField, VectorField]
Symbol = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], Number]


# ---------------------------------------------------------------------------
# Fourier multipliers
# ---------------------------------------------------------------------------

def _symbol_array(grid: SpectralGrid, m: Symbol) -> np.ndarray:
    if callable(m):
        m = m(grid.k)
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise SymbolError("Fourier symbol has non-finite values")
    return m


def apply_symbol(f: Field, m: Symbol, odd: bool = False) -> Field:
    """Apply the Fourier multiplier ``m(D)`` to a field.

    ``m`` is either an array on the half spectrum (``grid.spectral_shape``,
    optionally with a leading component axis) or a callable of the wavevector
    array ``grid.k``.  With ``odd=True`` the Nyquist coefficients are zeroed,
    which keeps odd symbols such as ``i k`` real-valued.
    """
    grid = f.grid
    m = _symbol_array(grid, m)
    coeffs = f.hat * m
    if odd:
        coeffs = np.where(grid.nyquist, 0.0, coeffs)
    values = grid.ifft(coeffs)
    return _wrap(grid, values)


def _wrap(grid: SpectralGrid, values: np.ndarray) -> Field:
    if values.shape == grid.shape:
        return ScalarField(grid, values)
    return VectorField(grid, values)


def gradient_array(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    """Spectral gradient of a (batched) scalar array; component axis first."""
    coeffs = grid.fft(values)
    coeffs = np.where(grid.nyquist, 0.0, coeffs)
    ik = 1j * grid.k.reshape((grid.dim,) + (1,) * (values.ndim - grid.dim) + grid.spectral_shape)
    return grid.ifft(ik * coeffs[None])


def divergence_array(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    """Spectral divergence of a (batched) vector array with component axis first."""
    coeffs = grid.fft(values)
    coeffs = np.where(grid.nyquist, 0.0, coeffs)
    ik = 1j * grid.k.reshape((grid.dim,) + (1,) * (values.ndim - 1 - grid.dim) + grid.spectral_shape)
    return grid.ifft(np.sum(ik * coeffs, axis=0))


def differential(f: Field, kind: str) -> Field:
    """Gradient, divergence or Laplacian of a field.

    ``grad`` maps scalar -> vector, ``div`` vector -> scalar and
    ``laplacian`` acts on either (component-wise on vectors).
    """
    grid = f.grid
    if kind == "grad":
        if not isinstance(f, ScalarField):
            raise TypeError("grad expects a ScalarField")
        return VectorField(grid, gradient_array(grid, f.values))
    if kind == "div":
        if not isinstance(f, VectorField):
            raise TypeError("div expects a VectorField")
        return ScalarField(grid, divergence_array(grid, f.values))
    if kind == "laplacian":
        return apply_symbol(f, -grid.k2)
    raise ValueError(f"unknown differential kind {kind!r}")


def grad(f: ScalarField) -> VectorField:
    return differential(f, "grad")


def div(f: VectorField) -> ScalarField:
    return differential(f, "div")


def laplacian(f: Field) -> Field:
    return differential(f, "laplacian")


# ---------------------------------------------------------------------------
# Products and norms
# ---------------------------------------------------------------------------

def truncate(f: Field) -> Field:
    """Project onto the 2/3 de-aliasing band."""
    grid = f.grid
    return _wrap(grid, grid.ifft(np.where(grid.dealias, f.hat, 0.0)))


def dealiased_array_product(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mask = grid.dealias
    at = grid.ifft(np.where(mask, grid.fft(a), 0.0))
    bt = grid.ifft(np.where(mask, grid.fft(b), 0.0))
    return grid.ifft(np.where(mask, grid.fft(at * bt), 0.0))


def product_dealiased(f: Field, g: Field) -> Field:
    """Pointwise product with 2/3-rule truncation of both factors and the result.

    Scalar * scalar gives a scalar; scalar * vector (either order) gives a
    vector scaled component-wise.  Use :func:`dot_dealiased` for vector dot
    products.
    """
    _check_same_grid(f, g)
    grid = f.grid
    a, b = f.values, g.values
    if isinstance(f, VectorField) and isinstance(g, VectorField):
        raise TypeError("use dot_dealiased for vector-vector products")
    if isinstance(f, VectorField):
        b = b[None]
    elif isinstance(g, VectorField):
        a = a[None]
    return _wrap(grid, dealiased_array_product(grid, a, b))


def dot_dealiased(f: VectorField, g: VectorField) -> ScalarField:
    _check_same_grid(f, g)
    grid = f.grid
    return ScalarField(grid, np.sum(dealiased_array_product(grid, f.values, g.values), axis=0))


def sobolev_norm(f: Field, s: float) -> float:
    """``(sum_k (1+|k|^2)^s |f_k|^2)^(1/2)``, scaled so that ``s = 0`` is the L2 norm."""
    grid = f.grid
    values = f.values if isinstance(f, VectorField) else f.values[None]
    axes = tuple(range(1, values.ndim))
    coeffs = np.fft.fftn(values, axes=axes) / grid.size
    kk = np.meshgrid(*grid.wavenumbers, indexing="ij")
    weight = (1.0 + sum(ki**2 for ki in kk)) ** s
    return float(np.sqrt(grid.measure * np.sum(weight * np.abs(coeffs) ** 2)))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(f.values**2) * f.grid.cell_volume))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_csv(f: Field, path: str | Path) -> None:
    """One row per grid point: coordinates followed by the value(s)."""
    grid = f.grid
    coords = grid.mesh.reshape(grid.dim, -1).T
    values = f.values.reshape(-1, grid.size).T if isinstance(f, VectorField) else f.values.reshape(-1, 1)
    names = ["x", "y"][: grid.dim]
    if isinstance(f, VectorField):
        names += [f"value{i}" for i in range(grid.dim)]
    else:
        names += ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for c, v in zip(coords, values):
            writer.writerow([repr(float(x)) for x in c] + [repr(float(x)) for x in v])


def read_csv(path: str | Path, grid: SpectralGrid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = data[:, grid.dim:]
    if values.shape[1] == 1:
        return ScalarField(grid, values[:, 0].reshape(grid.shape))
    return VectorField(grid, values.T.reshape((grid.dim,) + grid.shape))


def write_binary_array(path: str | Path, grid: SpectralGrid, samples: np.ndarray) -> None:
    samples = np.asarray(samples, dtype="<f8")
    samples = samples.reshape((-1,) + grid.shape)
    header = struct.pack("<4sIII", BINARY_MAGIC, BINARY_VERSION, grid.dim, samples.shape[0])
    header += struct.pack(f"<{grid.dim}I", *grid.shape)
    header += struct.pack(f"<{grid.dim}d", *grid.lengths)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(samples).tobytes())


def read_binary_array(path: str | Path) -> tuple:
    """Return ``(grid, samples)`` with samples shaped ``(ncomp, *points)``."""
    raw = Path(path).read_bytes()
    magic, version, dim, ncomp = struct.unpack_from("<4sIII", raw, 0)
    if magic != BINARY_MAGIC or version != BINARY_VERSION:
        raise ValueError(f"{path}: not a field dump (magic={magic!r}, version={version})")
    off = 16
    points = struct.unpack_from(f"<{dim}I", raw, off)
    off += 4 * dim
    lengths = struct.unpack_from(f"<{dim}d", raw, off)
    off += 8 * dim
    grid = make_grid(dim, lengths, points)
    samples = np.frombuffer(raw, dtype="<f8", offset=off).reshape((ncomp,) + grid.shape)
    return grid, samples.astype(float)


def write_binary(f: Field, path: str | Path) -> None:
    write_binary_array(path, f.grid, f.values)


def read_binary(path: str | Path) -> Field:
    grid, samples = read_binary_array(path)
    if samples.shape[0] == 1:
        return ScalarField(grid, samples[0])
    return VectorField(grid, samples)
