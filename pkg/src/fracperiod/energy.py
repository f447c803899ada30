"""Nonlinearities, the energy functional on the trace side, and hypothesis checks.

With the extension identity ``||v||_X^2 = kappa_s |u|_{H^s}^2`` the energy of the
extended problem becomes

    J(u) = kappa_s/2 |u|_{H^s}^2 - lambda_inf kappa_s/2 |u|_2^2 - kappa_s int F(x, u) dx,

and its L^2 gradient has coefficients
``kappa_s [(mu_k^s - lambda_inf) beta_k - fhat_k]``.  The nonlinear terms are
evaluated on a collocation grid refined by ``pad`` per axis, and the
gradient and Hessian are the exact derivatives of that discrete energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .fractional import (SpectrumError, SpectrumTable, enumerate_spectrum, is_resonant,
                         multiplier)
from .torus import (FourierField, ModeLattice, TorusConfig, coeffs_to_grid, grid_to_coeffs,
                    inner, l2_norm)


class Nonlinearity:
    """f(x, t) with primitive F and t-derivative; x is a tuple of grid coordinates."""

    kind = "abstract"
    odd = True
    x_dependent = False

    @property
    def lambda0(self) -> float:
        raise NotImplementedError

    def f(self, x, t):
        raise NotImplementedError

    def F(self, x, t):
        raise NotImplementedError

    def dfdt(self, x, t):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RationalOdd(Nonlinearity):
    """f = a t / (1 + t^2), F = (a/2) log(1 + t^2)."""

    a: float
    kind = "rational_odd"

    @property
    def lambda0(self) -> float:
        return self.a

    def f(self, x, t):
        return self.a * t / (1.0 + t * t)

    def F(self, x, t):
        return 0.5 * self.a * np.log1p(t * t)

    def dfdt(self, x, t):
        t2 = t * t
        return self.a * (1.0 - t2) / (1.0 + t2) ** 2

    def to_json(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class RationalOddModulated(Nonlinearity):
    """a t/(1+t^2) + b cos(omega x_1) t^3/(1+t^4); the second term has zero slope at 0 and inf."""

    a: float
    b: float
    omega: float
    kind = "rational_odd_modulated"
    x_dependent = True

    @property
    def lambda0(self) -> float:
        return self.a

    def _mod(self, x):
        return self.b * np.cos(self.omega * x[0])

    def f(self, x, t):
        t2 = t * t
        return self.a * t / (1.0 + t2) + self._mod(x) * t * t2 / (1.0 + t2 * t2)

    def F(self, x, t):
        t2 = t * t
        return 0.5 * self.a * np.log1p(t2) + 0.25 * self._mod(x) * np.log1p(t2 * t2)

    def dfdt(self, x, t):
        t2 = t * t
        t4 = t2 * t2
        return (self.a * (1.0 - t2) / (1.0 + t2) ** 2
                + self._mod(x) * t2 * (3.0 - t4) / (1.0 + t4) ** 2)

    def to_json(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


class Tabulated(Nonlinearity):
    """x-independent f given by samples on t >= 0 (extended oddly) or on a signed grid.

    Inside the table f is a cubic spline; outside it is held at the end values,
    so ``f/t -> 0`` at infinity holds by construction and F grows linearly.
    """

    kind = "custom"

    def __init__(self, t, values, lambda0: float, odd: bool = True):
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 4:
            raise ValueError("custom table needs matching 1-D t and f arrays with >= 4 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("custom table t values must be strictly increasing")
        if odd and t[0] >= 0:
            if t[0] == 0:
                t, v = t[1:], v[1:]
            t = np.concatenate([-t[::-1], [0.0], t])
            v = np.concatenate([-v[::-1], [0.0], v])
        if not (t[0] < 0 < t[-1]) or not np.any(t == 0):
            raise ValueError("custom table must contain t = 0 and span both signs")
        self.t = t
        self.values = v
        self._lambda0 = float(lambda0)
        self.odd = odd
        self._spline = CubicSpline(t, v)
        self._prim = self._spline.antiderivative()
        self._zero = float(self._prim(0.0))
        self._lo, self._hi = t[0], t[-1]
        self._Flo = float(self._prim(self._lo)) - self._zero
        self._Fhi = float(self._prim(self._hi)) - self._zero

    @property
    def lambda0(self) -> float:
        return self._lambda0

    def f(self, x, t):
        t = np.asarray(t, dtype=float)
        if self.odd:  # evaluate on |t| so symmetry is exact, not just up to rounding
            return np.sign(t) * self._spline(np.minimum(np.abs(t), self._hi))
        return self._spline(np.clip(t, self._lo, self._hi))

    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        if self.odd:
            t = np.abs(t)
        inside = self._prim(np.clip(t, self._lo, self._hi)) - self._zero
        out = np.where(t > self._hi, self._Fhi + self.values[-1] * (t - self._hi), inside)
        return np.where(t < self._lo, self._Flo + self.values[0] * (t - self._lo), out)

    def dfdt(self, x, t):
        t = np.asarray(t, dtype=float)
        if self.odd:
            t = np.abs(t)
        d = self._spline(np.clip(t, self._lo, self._hi), 1)
        return np.where((t < self._lo) | (t > self._hi), 0.0, d)

    def to_json(self):
        return {"kind": self.kind, "t": self.t.tolist(), "f": self.values.tolist(),
                "lambda0": self._lambda0, "odd": self.odd}


@dataclass(frozen=True)
class Zero(Nonlinearity):
    """f = 0 (linear problem)."""

    kind = "zero"

    @property
    def lambda0(self) -> float:
        return 0.0

    def f(self, x, t):
        return np.zeros_like(t)

    F = f
    dfdt = f

    def to_json(self):
        return {"kind": self.kind}


def make_nonlinearity(spec: dict, cfg: TorusConfig) -> Nonlinearity:
    kind = spec.get("kind")
    if kind == "rational_odd":
        return RationalOdd(float(spec["a"]))
    if kind == "rational_odd_modulated":
        return RationalOddModulated(float(spec["a"]), float(spec.get("b", 0.0)), cfg.omega)
    if kind == "custom":
        return Tabulated(spec["t"], spec["f"], spec["lambda0"], spec.get("odd", True))
    if kind == "zero":
        return Zero()
    raise ValueError(f"unknown nonlinearity kind {kind!r}")


# ---------------------------------------------------------------------------

class DiscreteProblem:
    """Energy, gradient and Hessian of J on one lattice, with cached grids."""

    def __init__(self, cfg: TorusConfig, lattice: ModeLattice, nl: Nonlinearity, pad: int = 2):
        self.cfg = cfg
        self.lattice = lattice
        self.nl = nl
        self.pad = pad
        self.fine = tuple(pad * (2 * M + 1) for M in lattice.half_extents)
        self.mult = multiplier(cfg, lattice)
        self.shifted = cfg.kappa_s * (self.mult - cfg.lambda_inf)
        self.x = lattice.grid_coordinates(self.fine)
        self.dV = lattice.period**lattice.ndim / math.prod(self.fine)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs_to_grid(coeffs, self.lattice, self.fine)

    def project(self, samples: np.ndarray) -> np.ndarray:
        return grid_to_coeffs(samples, self.lattice)

    def energy(self, coeffs: np.ndarray) -> float:
        cfg = self.cfg
        power = np.abs(coeffs) ** 2
        quad = 0.5 * cfg.kappa_s * float(np.sum((self.mult - cfg.lambda_inf) * power))
        u = self.values(coeffs)
        return quad - cfg.kappa_s * float(np.sum(self.nl.F(self.x, u))) * self.dV

    def gradient(self, coeffs: np.ndarray) -> np.ndarray:
        fhat = self.project(self.nl.f(self.x, self.values(coeffs)))
        return self.shifted * coeffs - self.cfg.kappa_s * fhat

    def hessian(self, coeffs: np.ndarray, w: np.ndarray, fprime: np.ndarray | None = None) -> np.ndarray:
        if fprime is None:
            fprime = self.nl.dfdt(self.x, self.values(coeffs))
        return self.shifted * w - self.cfg.kappa_s * self.project(fprime * self.values(w))

    def fprime(self, coeffs: np.ndarray) -> np.ndarray:
        return self.nl.dfdt(self.x, self.values(coeffs))


def _problem(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, pad: int = 2) -> DiscreteProblem:
    return DiscreteProblem(cfg, u.lattice, nl, pad)


def energy(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, pad: int = 2) -> float:
    return _problem(u, nl, cfg, pad).energy(u.coeffs)


def gradient(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, pad: int = 2) -> FourierField:
    """L^2 Riesz representative of J'(u)."""
    return FourierField(u.lattice, _problem(u, nl, cfg, pad).gradient(u.coeffs), u.is_real)


def hessian_vec(u: FourierField, w: FourierField, nl: Nonlinearity, cfg: TorusConfig,
                pad: int = 2) -> FourierField:
    u._compatible(w)
    return FourierField(u.lattice, _problem(u, nl, cfg, pad).hessian(u.coeffs, w.coeffs),
                        u.is_real and w.is_real)


# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    lambda_inf: float
    lambda0: float
    odd: bool
    resonant: bool
    resonance_distance: float
    nearest_eigenvalue: float
    eigenvalue_below: float | None
    eigenvalue_above: float
    condition_holds: bool
    h: int | None
    k: int | None
    pair_bound: int
    asymptotics: dict
    branch: str
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "lambda_inf": self.lambda_inf,
            "lambda0": self.lambda0,
            "odd": self.odd,
            "resonant": self.resonant,
            "resonance_distance": self.resonance_distance,
            "nearest_eigenvalue": self.nearest_eigenvalue,
            "eigenvalue_below": self.eigenvalue_below,
            "eigenvalue_above": self.eigenvalue_above,
            "C_lambda_inf": {"holds": self.condition_holds, "h": self.h, "k": self.k,
                             "pair_bound": self.pair_bound},
            "asymptotics": self.asymptotics,
            "branch": self.branch,
            "notes": list(self.notes),
        }


def asymptotic_diagnostics(nl: Nonlinearity, cfg: TorusConfig, samples: int = 9) -> dict:
    """Sampled checks of f/t -> 0 at infinity, f/t -> lambda0 at 0, oddness, F(x,0) = 0."""
    x0 = np.linspace(0.0, cfg.T, samples, endpoint=False)
    x = (x0,) + tuple(np.zeros_like(x0) for _ in range(cfg.N - 1))
    lam0 = nl.lambda0
    big = np.geomspace(1e2, 1e6, 5)
    ratios_inf = [float(np.max(np.abs(nl.f(x, np.full_like(x0, t)) / t))) for t in big]
    threshold_inf = 1e-4 * max(abs(lam0), 1.0)
    small = [1e-3, 1e-5]
    err0 = [float(np.max(np.abs(nl.f(x, np.full_like(x0, t)) / t - lam0))) for t in small]
    tol0 = [10.0 * t * max(abs(lam0), 1.0) for t in small]
    ts = np.linspace(-5, 5, 41)
    odd_defect = max(float(np.max(np.abs(nl.f(x, np.full_like(x0, t)) + nl.f(x, np.full_like(x0, -t)))))
                     for t in ts)
    F0 = float(np.max(np.abs(nl.F(x, np.zeros_like(x0)))))
    return {
        "ratio_at_infinity": ratios_inf,
        "ratio_at_infinity_ok": bool(ratios_inf[-1] < threshold_inf and ratios_inf[-1] <= ratios_inf[0]),
        "slope_at_zero_error": err0,
        "slope_at_zero_ok": bool(all(e <= t for e, t in zip(err0, tol0))),
        "odd_defect": odd_defect,
        "odd_ok": bool(odd_defect <= 1e-12) if nl.odd else True,
        "F_at_zero": F0,
        "F_at_zero_ok": F0 == 0.0,
    }


def check_hypotheses(nl: Nonlinearity, cfg: TorusConfig, table: SpectrumTable | ModeLattice,
                     tol: float = 1e-12) -> HypothesisReport:
    """Resonance, the gap condition lambda0 + lambda_inf < lambda_h <= lambda_k < lambda_inf,
    and which existence statement applies.

    ``table`` may be a lattice, in which case the spectrum is enumerated far
    enough to bracket ``lambda_inf + |lambda0|``.
    """
    lam_inf = cfg.lambda_inf
    lam0 = nl.lambda0
    if isinstance(table, ModeLattice):
        table = enumerate_spectrum(cfg, table, count=1, lambda_max=max(lam_inf, lam_inf + abs(lam0)))
    if table.entries[-1].lam <= max(lam_inf, lam_inf + lam0):
        raise SpectrumError("spectrum table does not reach lambda_inf + |lambda0|")
    res = is_resonant(lam_inf, table, tol)
    lams = table.eigenvalues()
    above = np.nonzero(lams > lam0 + lam_inf)[0]
    below = np.nonzero(lams < lam_inf)[0]
    h = int(above[0]) + 1 if above.size else None
    k = int(below[-1]) + 1 if below.size else None
    holds = h is not None and k is not None and h <= k
    notes = []
    if res.resonant:
        branch = "none"
        notes.append("lambda_inf is an eigenvalue (resonant case); no existence statement applies")
    elif lam_inf < lams[0]:
        branch = "direct_minimization"
        notes.append("lambda_inf < lambda_1: the energy is coercive, use direct minimization")
    elif holds and nl.odd:
        branch = "multiplicity"
    else:
        branch = "existence"
        if holds and not nl.odd:
            notes.append("gap condition holds but f is not odd; only one solution is guaranteed")
    return HypothesisReport(
        lambda_inf=lam_inf,
        lambda0=lam0,
        odd=nl.odd,
        resonant=res.resonant,
        resonance_distance=res.distance,
        nearest_eigenvalue=res.nearest,
        eigenvalue_below=res.below,
        eigenvalue_above=res.above,
        condition_holds=bool(holds),
        h=h,
        k=k,
        pair_bound=(k - h + 1) if holds and not res.resonant else 0,
        asymptotics=asymptotic_diagnostics(nl, cfg),
        branch=branch,
        notes=notes,
    )
