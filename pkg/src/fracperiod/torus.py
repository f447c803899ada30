"""Truncated Fourier representation of T-periodic functions on (0, T)^N.

A field is stored as coefficients ``beta_k`` against the orthonormal basis
``exp(i omega k.x) / sqrt(T^N)``, so that ``|u|_{L^2}^2 = sum |beta_k|^2``
holds without weights.  Coefficient arrays have shape ``(2M_1+1, ...)`` in
FFT ordering along each axis (``k = 0, 1, ..., M, -M, ..., -1``), which is
exactly the set ``{|k_i| <= M_i}``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft


def fft_workers() -> int:
    """Worker count for transforms, capped by ``FRACPERIOD_THREADS``."""
    raw = os.environ.get("FRACPERIOD_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TorusConfig:
    """Problem parameters for ``(-Delta + m^2)^s u = lambda_inf u + f(x, u)``."""

    T: float
    N: int
    m: float
    s: float
    lambda_inf: float = 0.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.T

    @property
    def kappa_s(self) -> float:
        s = self.s
        if s == 0.5:
            return 1.0
        return 2.0 ** (1.0 - 2.0 * s) * math.gamma(1.0 - s) / math.gamma(s)

    @property
    def crit_exp(self) -> float:
        """Fractional critical Sobolev exponent 2N/(N-2s); infinite if N <= 2s."""
        if self.N <= 2 * self.s:
            return math.inf
        return 2.0 * self.N / (self.N - 2.0 * self.s)

    @property
    def volume(self) -> float:
        return self.T**self.N

    def with_lambda(self, lambda_inf: float) -> "TorusConfig":
        return TorusConfig(self.T, self.N, self.m, self.s, lambda_inf)


@dataclass(frozen=True)
class ModeLattice:
    """Symmetric band limit ``|k_i| <= M_i`` plus a collocation grid.

    ``period`` is carried here because the coefficient normalization and the
    grid nodes ``x_j = j T / n`` both depend on it.
    """

    half_extents: tuple[int, ...]
    period: float = 2.0 * math.pi
    grid_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        half = tuple(int(M) for M in self.half_extents)
        if not half or any(M < 1 for M in half):
            raise ValueError(f"half_extents must be >= 1, got {self.half_extents}")
        sizes = self.grid_sizes
        if sizes is None:
            sizes = tuple(2 * M + 1 for M in half)
        sizes = tuple(int(n) for n in sizes)
        if len(sizes) != len(half):
            raise ValueError("grid_sizes and half_extents differ in length")
        for M, n in zip(half, sizes):
            if n < 2 * M + 1:
                raise ValueError(f"grid size {n} cannot resolve modes |k| <= {M}")
        if not self.period > 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "half_extents", half)
        object.__setattr__(self, "grid_sizes", sizes)

    @classmethod
    def cube(cls, N: int, M: int, period: float = 2.0 * math.pi, grid: int | None = None):
        return cls((M,) * N, period, None if grid is None else (grid,) * N)

    @property
    def ndim(self) -> int:
        return len(self.half_extents)

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of a coefficient array."""
        return tuple(2 * M + 1 for M in self.half_extents)

    @property
    def cell_volume(self) -> float:
        return self.period**self.ndim / math.prod(self.grid_sizes)

    def same_modes(self, other: "ModeLattice") -> bool:
        return self.half_extents == other.half_extents and math.isclose(
            self.period, other.period, rel_tol=1e-14
        )

    def with_grid(self, grid_sizes) -> "ModeLattice":
        return ModeLattice(self.half_extents, self.period, tuple(grid_sizes))

    def padded(self, factor: int = 2) -> "ModeLattice":
        return self.with_grid(tuple(factor * n for n in self.grid_sizes))

    def refined(self, factor: int = 2) -> "ModeLattice":
        """Lattice with ``factor`` times the band limit on its own minimal grid."""
        return ModeLattice(tuple(factor * M for M in self.half_extents), self.period)

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, shaped to broadcast over coefficient arrays."""
        out = []
        for axis, M in enumerate(self.half_extents):
            k = np.fft.fftfreq(2 * M + 1, d=1.0 / (2 * M + 1)).round().astype(np.int64)
            shape = [1] * self.ndim
            shape[axis] = k.size
            out.append(k.reshape(shape))
        return tuple(out)

    def k_squared(self) -> np.ndarray:
        ks = self.wavenumbers()
        total = np.zeros(self.shape, dtype=np.int64)
        for k in ks:
            total = total + k * k
        return total

    def mode_index(self, k) -> tuple[int, ...]:
        """Array index of mode ``k`` in a coefficient array."""
        if len(k) != self.ndim:
            raise ValueError(f"mode {k} has wrong dimension")
        idx = []
        for ki, M in zip(k, self.half_extents):
            if abs(ki) > M:
                raise ValueError(f"mode {tuple(k)} outside the band limit {self.half_extents}")
            idx.append(int(ki) % (2 * M + 1))
        return tuple(idx)

    def grid_coordinates(self, grid_sizes=None) -> tuple[np.ndarray, ...]:
        """Broadcastable node coordinates ``x_j = j T / n`` (0 inclusive, T exclusive)."""
        sizes = self.grid_sizes if grid_sizes is None else tuple(grid_sizes)
        out = []
        for axis, n in enumerate(sizes):
            shape = [1] * self.ndim
            shape[axis] = n
            out.append((np.arange(n) * (self.period / n)).reshape(shape))
        return tuple(out)

    @cached_property
    def _embed_index(self):
        return tuple(
            np.fft.fftfreq(2 * M + 1, d=1.0 / (2 * M + 1)).round().astype(np.int64)
            for M in self.half_extents
        )

    def embed_index(self, grid_sizes) -> tuple[np.ndarray, ...]:
        """Open-mesh index placing each lattice mode at ``k mod n`` on a grid."""
        return np.ix_(*[k % n for k, n in zip(self._embed_index, grid_sizes)])


@dataclass(frozen=True, eq=False)
class FourierField:
    """A T-periodic field as truncated Fourier coefficients on a lattice."""

    lattice: ModeLattice
    coeffs: np.ndarray
    is_real: bool = True

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != self.lattice.shape:
            raise ValueError(f"coefficient shape {c.shape} != lattice shape {self.lattice.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice: ModeLattice) -> "FourierField":
        return cls(lattice, np.zeros(lattice.shape, dtype=np.complex128))

    @classmethod
    def mode(cls, lattice: ModeLattice, k, value: complex = 1.0) -> "FourierField":
        """Single complex exponential with coefficient ``value`` at ``k``."""
        c = np.zeros(lattice.shape, dtype=np.complex128)
        c[lattice.mode_index(k)] = value
        return cls(lattice, c, is_real=all(ki == 0 for ki in k) and np.imag(value) == 0)

    @classmethod
    def random(cls, lattice: ModeLattice, rng: np.random.Generator, decay: float = 0.0,
               scale: float = 1.0) -> "FourierField":
        """Random real field; ``decay`` damps coefficients by ``exp(-decay |k|)``."""
        c = rng.standard_normal(lattice.shape) + 1j * rng.standard_normal(lattice.shape)
        c *= scale * np.exp(-decay * np.sqrt(lattice.k_squared()))
        return cls(lattice, hermitian_part(c))

    def _compatible(self, other: "FourierField"):
        if not self.lattice.same_modes(other.lattice):
            raise ValueError("fields live on different lattices")

    def __add__(self, other: "FourierField") -> "FourierField":
        self._compatible(other)
        return FourierField(self.lattice, self.coeffs + other.coeffs, self.is_real and other.is_real)

    def __sub__(self, other: "FourierField") -> "FourierField":
        self._compatible(other)
        return FourierField(self.lattice, self.coeffs - other.coeffs, self.is_real and other.is_real)

    def __neg__(self) -> "FourierField":
        return FourierField(self.lattice, -self.coeffs, self.is_real)

    def __mul__(self, scalar) -> "FourierField":
        real = self.is_real and np.isreal(scalar)
        return FourierField(self.lattice, self.coeffs * scalar, bool(real))

    __rmul__ = __mul__

    def coefficient(self, k) -> complex:
        return complex(self.coeffs[self.lattice.mode_index(k)])

    def hermitian_defect(self) -> float:
        """max |beta_{-k} - conj(beta_k)|; zero for real fields."""
        return float(np.max(np.abs(_negate_modes(self.coeffs) - np.conj(self.coeffs))))

    def embed(self, lattice: ModeLattice) -> "FourierField":
        """Zero-pad or truncate to another band limit with the same period."""
        if not math.isclose(lattice.period, self.lattice.period, rel_tol=1e-14):
            raise ValueError("cannot embed across different periods")
        out = np.zeros(lattice.shape, dtype=np.complex128)
        common = tuple(min(a, b) for a, b in zip(self.lattice.half_extents, lattice.half_extents))
        src = np.ix_(*[np.r_[0:M + 1, -M:0] % (2 * A + 1) for M, A in zip(common, self.lattice.half_extents)])
        dst = np.ix_(*[np.r_[0:M + 1, -M:0] % (2 * B + 1) for M, B in zip(common, lattice.half_extents)])
        out[dst] = self.coeffs[src]
        return FourierField(lattice, out, self.is_real)


def _negate_modes(c: np.ndarray) -> np.ndarray:
    """Array ``d`` with ``d[k] = c[-k]`` in FFT ordering."""
    d = c
    for axis in range(c.ndim):
        d = np.roll(np.flip(d, axis=axis), 1, axis=axis)
    return d


def hermitian_part(c: np.ndarray) -> np.ndarray:
    """Project coefficients onto the Hermitian-symmetric (real-field) subspace."""
    return 0.5 * (c + np.conj(_negate_modes(c)))


def coeffs_to_grid(coeffs: np.ndarray, lattice: ModeLattice, grid_sizes=None,
                   real: bool = True) -> np.ndarray:
    sizes = lattice.grid_sizes if grid_sizes is None else tuple(grid_sizes)
    for M, n in zip(lattice.half_extents, sizes):
        if n < 2 * M + 1:
            raise ValueError(f"grid size {n} cannot resolve modes |k| <= {M}")
    full = np.zeros(sizes, dtype=np.complex128)
    full[lattice.embed_index(sizes)] = coeffs
    scale = math.prod(sizes) / math.sqrt(lattice.period**lattice.ndim)
    values = scipy.fft.ifftn(full, workers=fft_workers()) * scale
    return values.real if real else values


def grid_to_coeffs(samples: np.ndarray, lattice: ModeLattice) -> np.ndarray:
    sizes = samples.shape
    if len(sizes) != lattice.ndim:
        raise ValueError(f"samples have {len(sizes)} axes, lattice has {lattice.ndim}")
    for M, n in zip(lattice.half_extents, sizes):
        if n < 2 * M + 1:
            raise ValueError(f"grid size {n} cannot resolve modes |k| <= {M}")
    scale = math.sqrt(lattice.period**lattice.ndim) / math.prod(sizes)
    full = scipy.fft.fftn(samples, workers=fft_workers())
    return full[lattice.embed_index(sizes)] * scale


def analyze(samples, lattice: ModeLattice) -> FourierField:
    """Fourier coefficients of grid samples, truncated to the lattice modes.

    The grid must have exactly ``lattice.grid_sizes`` nodes per axis.
    """
    samples = np.asarray(samples)
    if samples.shape != lattice.grid_sizes:
        raise ValueError(f"samples of shape {samples.shape} do not match grid {lattice.grid_sizes}")
    real = not np.iscomplexobj(samples)
    return FourierField(lattice, grid_to_coeffs(samples, lattice), is_real=real)


def synthesize(field: FourierField, complex_output: bool = False) -> np.ndarray:
    """Evaluate a field at the nodes of its lattice's collocation grid."""
    return coeffs_to_grid(field.coeffs, field.lattice, real=field.is_real and not complex_output)


def inner(u: FourierField, v: FourierField) -> float:
    """Real L^2 inner product of two fields."""
    u._compatible(v)
    return float(np.real(np.vdot(v.coeffs, u.coeffs)))


def l2_norm(field: FourierField) -> float:
    return float(np.sqrt(np.sum(np.abs(field.coeffs) ** 2)))
