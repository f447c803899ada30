"""The multiplier (omega^2 |k|^2 + m^2)^s, its norms, spectrum and eigenspaces."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .torus import FourierField, ModeLattice, TorusConfig, inner, l2_norm


class SpectrumError(ValueError):
    """Requested eigenvalues lie beyond the lattice's certified radius."""


def _check_period(cfg: TorusConfig, lattice: ModeLattice):
    if not math.isclose(cfg.T, lattice.period, rel_tol=1e-14):
        raise ValueError(f"lattice period {lattice.period} != T = {cfg.T}")
    if lattice.ndim != cfg.N:
        raise ValueError(f"lattice dimension {lattice.ndim} != N = {cfg.N}")


def symbol(cfg: TorusConfig, lattice: ModeLattice) -> np.ndarray:
    """mu_k = omega^2 |k|^2 + m^2 on the coefficient array."""
    _check_period(cfg, lattice)
    return cfg.omega**2 * lattice.k_squared() + cfg.m**2


def multiplier(cfg: TorusConfig, lattice: ModeLattice, power: float = 1.0) -> np.ndarray:
    return symbol(cfg, lattice) ** (cfg.s * power)


def apply_operator(u: FourierField, cfg: TorusConfig) -> FourierField:
    return FourierField(u.lattice, multiplier(cfg, u.lattice) * u.coeffs, u.is_real)


def apply_inverse(g: FourierField, cfg: TorusConfig) -> FourierField:
    return FourierField(g.lattice, g.coeffs / multiplier(cfg, g.lattice), g.is_real)


def hs_norm(u: FourierField, cfg: TorusConfig, sign: int = 1) -> float:
    """Norm in H^s_T (``sign=+1``) or its dual H^{-s}_T (``sign=-1``)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    weights = multiplier(cfg, u.lattice, power=sign)
    return float(np.sqrt(np.sum(weights * np.abs(u.coeffs) ** 2)))


def rayleigh_quotient(u: FourierField, cfg: TorusConfig) -> float:
    l2 = l2_norm(u)
    if l2 == 0.0:
        raise ValueError("Rayleigh quotient of the zero field")
    return hs_norm(u, cfg) ** 2 / l2**2


@dataclass(frozen=True)
class SpectrumEntry:
    lam: float
    mu: float
    k_squared: int
    multiplicity: int
    representatives: tuple[tuple[int, ...], ...]
    index_range: tuple[int, int]  # 1-based, inclusive

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "k_squared": self.k_squared,
            "multiplicity": self.multiplicity,
            "representatives": [list(k) for k in self.representatives],
            "index_range": list(self.index_range),
        }


@dataclass(frozen=True)
class SpectrumTable:
    entries: tuple[SpectrumEntry, ...]
    certified_lambda: float

    def __len__(self):
        return len(self.entries)

    @property
    def total(self) -> int:
        """Number of eigenvalues counted with multiplicity."""
        return self.entries[-1].index_range[1] if self.entries else 0

    def eigenvalues(self) -> np.ndarray:
        """The non-decreasing sequence lambda_1 <= lambda_2 <= ... ."""
        return np.repeat([e.lam for e in self.entries], [e.multiplicity for e in self.entries])

    def lambda_at(self, index: int) -> float:
        for e in self.entries:
            if e.index_range[0] <= index <= e.index_range[1]:
                return e.lam
        raise SpectrumError(f"index {index} not covered by the table (total {self.total})")

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.entries]


def certified_lambda(cfg: TorusConfig, lattice: ModeLattice) -> float:
    """Largest eigenvalue whose multiplicity the truncation represents exactly."""
    _check_period(cfg, lattice)
    radius = min(lattice.half_extents)
    return (cfg.omega**2 * radius**2 + cfg.m**2) ** cfg.s


def enumerate_spectrum(cfg: TorusConfig, lattice: ModeLattice, count: int | None = None,
                       lambda_max: float | None = None) -> SpectrumTable:
    """Distinct eigenvalues with lattice-point multiplicities.

    Covers at least ``count`` eigenvalues (with multiplicity), and every
    eigenvalue up to and including the first one above ``lambda_max``.
    Eigenvalues are grouped by the exact integer ``|k|^2`` before being
    exponentiated, so ties never depend on floating point.
    """
    if count is None and lambda_max is None:
        raise ValueError("give count or lambda_max")
    _check_period(cfg, lattice)
    radius = min(lattice.half_extents)
    ksq = lattice.k_squared()
    admissible = np.unique(ksq[ksq <= radius * radius])

    entries = []
    index = 0
    ks = [np.broadcast_to(k, lattice.shape) for k in lattice.wavenumbers()]
    for n in admissible:
        n = int(n)
        mask = ksq == n
        reps = sorted(
            (tuple(int(k[mask][j]) for k in ks) for j in range(int(mask.sum()))), reverse=True
        )
        mu = cfg.omega**2 * n + cfg.m**2
        mult = len(reps)
        entries.append(SpectrumEntry(mu**cfg.s, mu, n, mult, tuple(reps), (index + 1, index + mult)))
        index += mult
        done_count = count is None or index >= count
        done_lambda = lambda_max is None or entries[-1].lam > lambda_max
        if done_count and done_lambda:
            break
    else:
        raise SpectrumError(
            f"lattice {lattice.half_extents} certifies eigenvalues only up to "
            f"{certified_lambda(cfg, lattice):.6g}; enlarge the band limit"
        )
    return SpectrumTable(tuple(entries), certified_lambda(cfg, lattice))


def brute_force_eigenvalues(cfg: TorusConfig, lattice: ModeLattice, count: int) -> list[float]:
    """Sort every multiplier value on the lattice (no grouping); oracle only."""
    vals = []
    for k in itertools.product(*[range(-M, M + 1) for M in lattice.half_extents]):
        n = sum(ki * ki for ki in k)
        vals.append((cfg.omega**2 * n + cfg.m**2) ** cfg.s)
    vals.sort()
    return vals[:count]


@dataclass(frozen=True)
class Resonance:
    resonant: bool
    distance: float
    nearest: float
    nearest_index: int
    below: float | None
    above: float


def is_resonant(lambda_inf: float, table: SpectrumTable, tol: float = 1e-12) -> Resonance:
    if not table.entries or table.entries[-1].lam <= lambda_inf:
        raise SpectrumError(
            f"lambda_inf = {lambda_inf} is not bracketed by the spectrum table; "
            "request more eigenvalues or a larger band limit"
        )
    lams = np.array([e.lam for e in table.entries])
    j = int(np.argmin(np.abs(lams - lambda_inf)))
    above = next(e.lam for e in table.entries if e.lam > lambda_inf)
    below = [e.lam for e in table.entries if e.lam < lambda_inf]
    dist = abs(lams[j] - lambda_inf)
    return Resonance(dist <= tol, float(dist), float(lams[j]), table.entries[j].index_range[0],
                     below[-1] if below else None, float(above))


@dataclass(frozen=True)
class Eigenfunction:
    field: FourierField
    lam: float
    index: int
    tag: str


def _half_representatives(reps):
    """One representative of each +-k pair (first non-zero component positive)."""
    out = []
    for k in reps:
        nz = next((ki for ki in k if ki != 0), 0)
        if nz >= 0:
            out.append(k)
    return out


def real_eigenbasis(cfg: TorusConfig, lattice: ModeLattice, count: int) -> list[Eigenfunction]:
    """First ``count`` L^2-orthonormal real eigenfunctions.

    Each +-k pair contributes sqrt(2) cos(omega k.x) and sqrt(2) sin(omega k.x)
    (divided by sqrt(T^N)); within a degenerate group the order is fixed by the
    sorted representatives.
    """
    table = enumerate_spectrum(cfg, lattice, count=count)
    out = []
    r2 = 1.0 / math.sqrt(2.0)
    for entry in table.entries:
        for k in _half_representatives(entry.representatives):
            if all(ki == 0 for ki in k):
                c = np.zeros(lattice.shape, dtype=np.complex128)
                c[lattice.mode_index(k)] = 1.0
                out.append(Eigenfunction(FourierField(lattice, c), entry.lam, len(out) + 1, "const"))
                continue
            neg = tuple(-ki for ki in k)
            c = np.zeros(lattice.shape, dtype=np.complex128)
            c[lattice.mode_index(k)] = r2
            c[lattice.mode_index(neg)] = r2
            out.append(Eigenfunction(FourierField(lattice, c), entry.lam, len(out) + 1, f"cos{list(k)}"))
            c = np.zeros(lattice.shape, dtype=np.complex128)
            c[lattice.mode_index(k)] = -1j * r2
            c[lattice.mode_index(neg)] = 1j * r2
            out.append(Eigenfunction(FourierField(lattice, c), entry.lam, len(out) + 1, f"sin{list(k)}"))
    return out[:count]


@dataclass(frozen=True)
class EigenspaceSplit:
    """V_h = span of the first h eigenfunctions, and its L^2 complement."""

    h: int
    basis: tuple[Eigenfunction, ...]

    @property
    def lambda_h(self) -> float:
        return self.basis[-1].lam

    @property
    def dim(self) -> int:
        return len(self.basis)


def eigenspace_split(cfg: TorusConfig, lattice: ModeLattice, h: int) -> EigenspaceSplit:
    if h < 1:
        raise ValueError("h must be >= 1")
    return EigenspaceSplit(h, tuple(real_eigenbasis(cfg, lattice, h)))


def project(u: FourierField, split: EigenspaceSplit, which: str = "Vh") -> FourierField:
    if which not in ("Vh", "Vh_perp"):
        raise ValueError("which must be 'Vh' or 'Vh_perp'")
    coeffs = np.zeros_like(u.coeffs)
    for e in split.basis:
        coeffs = coeffs + inner(u, e.field) * e.field.coeffs
    p = FourierField(u.lattice, coeffs, u.is_real)
    return p if which == "Vh" else u - p
