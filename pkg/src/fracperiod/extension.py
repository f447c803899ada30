"""s-harmonic extension of torus fields into the half-cylinder (0,T)^N x (0, inf).

Each Fourier mode extends as ``beta_k theta(sqrt(mu_k) y)``, where ``theta``
solves ``theta'' + (1-2s)/y theta' - theta = 0`` with ``theta(0) = 1`` and
``theta(inf) = 0``.  The closed form used here is

    theta(y) = 2^{1-s} / Gamma(s) * y^s K_s(y),

with an independent ODE evaluator (Frobenius start near 0, asymptotic start
far out, stable inward integration) kept for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma, kve

from .fractional import multiplier, symbol
from .torus import FourierField, ModeLattice, TorusConfig, coeffs_to_grid, hermitian_part


def frobenius_series(s: float, y, terms: int = 40):
    """The two Frobenius solutions near y = 0 and their derivatives.

    Returns ``(p, dp, q, dq)`` with ``p = sum a_j y^{2j}`` (a_0 = 1) and
    ``q = y^{2s} sum b_j y^{2j}`` (b_0 = 1).
    """
    y = np.asarray(y, dtype=float)
    y2 = y * y
    p = np.zeros_like(y)
    dp = np.zeros_like(y)
    q = np.zeros_like(y)
    dq = np.zeros_like(y)
    a = 1.0
    b = 1.0
    for j in range(terms):
        if j > 0:
            a /= 4.0 * j * (j - s)
            b /= 4.0 * j * (j + s)
        p += a * y2**j
        if j > 0:
            dp += a * 2 * j * y ** (2 * j - 1)
        q += b * y ** (2 * s + 2 * j)
        dq += b * (2 * s + 2 * j) * y ** (2 * s + 2 * j - 1)
    return p, dp, q, dq


@dataclass(frozen=True)
class ThetaProfile:
    """Evaluator for theta and theta' on y >= 0.

    ``method`` is ``"bessel"`` (closed form) or ``"ode"`` (numerical
    integration of the profile equation, usable on ``y <= ode_ymax``).
    """

    s: float
    method: str = "bessel"
    ode_ymax: float = 30.0

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.method not in ("bessel", "ode"):
            raise ValueError(f"unknown theta method {self.method!r}")

    @property
    def normalization(self) -> float:
        return 2.0 ** (1.0 - self.s) / gamma(self.s)

    @property
    def kappa_s(self) -> float:
        s = self.s
        return 1.0 if s == 0.5 else 2.0 ** (1 - 2 * s) * math.gamma(1 - s) / math.gamma(s)

    def __call__(self, y):
        return self.value(y)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if self.method == "ode":
            return _ode_profile(self.s, self.ode_ymax)(y)[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            v = self.normalization * y**self.s * kve(self.s, y) * np.exp(-y)
        return np.where(y == 0.0, 1.0, v)

    def derivative(self, y):
        """theta'(y); diverges like y^{2s-1} at 0 when s < 1/2."""
        y = np.asarray(y, dtype=float)
        if self.method == "ode":
            return _ode_profile(self.s, self.ode_ymax)(y)[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            d = -self.normalization * y**self.s * kve(1.0 - self.s, y) * np.exp(-y)
        if self.s > 0.5:
            return np.where(y == 0.0, 0.0, d)
        if self.s == 0.5:
            return np.where(y == 0.0, -1.0, d)
        return np.where(y == 0.0, -np.inf, d)

    def flux(self, y):
        """-y^{1-2s} theta'(y), which tends to kappa_s as y -> 0."""
        y = np.asarray(y, dtype=float)
        if self.method == "ode":
            return -(y ** (1 - 2 * self.s)) * self.derivative(y)
        with np.errstate(invalid="ignore", divide="ignore"):
            f = self.normalization * y ** (1.0 - self.s) * kve(1.0 - self.s, y) * np.exp(-y)
        return np.where(y == 0.0, self.kappa_s, f)


def theta_profile(s: float, method: str = "bessel") -> ThetaProfile:
    return ThetaProfile(s, method)


@lru_cache(maxsize=16)
def _ode_profile(s: float, ymax: float):
    """Decaying solution of the profile ODE, normalized so that theta(0) = 1.

    Integrates inward from ``ymax`` (where the decaying branch dominates, so
    the inward direction is stable), starting from the large-y expansion
    ``y^{s-1/2} e^{-y} (1 + c_1/y + ...)``, then matches the result at a small
    ``y0`` against the Frobenius pair ``p + C q`` to fix the scale.
    """
    nu = s
    # asymptotic coefficients of sqrt(pi/2y) e^{-y} sum (4nu^2-1)(4nu^2-9).../(k! (8y)^k)
    def tail(y):
        terms = [1.0]
        dterms = [0.0]
        c = 1.0
        for k in range(1, 12):
            c *= (4 * nu * nu - (2 * k - 1) ** 2) / (k * 8.0)
            terms.append(c / y**k)
            dterms.append(-k * c / y ** (k + 1))
        S = sum(terms)
        dS = sum(dterms)
        pre = y ** (s - 0.5) * math.exp(-(y - ymax))  # rescaled by e^{ymax}
        dpre = pre * ((s - 0.5) / y - 1.0)
        return pre * S, dpre * S + pre * dS

    def rhs(y, z):
        return [z[1], z[0] - (1 - 2 * s) / y * z[1]]

    y0 = 0.05
    t0, d0 = tail(ymax)
    sol = solve_ivp(rhs, (ymax, y0), [t0, d0], method="DOP853", rtol=1e-13, atol=1e-300,
                    dense_output=True)
    th, dth = sol.y[:, -1]
    p, dp, q, dq = (float(v) for v in frobenius_series(s, y0))
    # th = A (p + C q), dth = A (dp + C dq)
    C = (dth * p - th * dp) / (th * dq - dth * q)
    A = th / (p + C * q)

    def evaluate(y):
        y = np.asarray(y, dtype=float)
        if np.any(y > ymax):
            raise ValueError(f"ODE profile only covers y <= {ymax}")
        val = np.empty_like(y)
        der = np.empty_like(y)
        small = y <= y0
        if np.any(small):
            pp, dpp, qq, dqq = frobenius_series(s, y[small])
            val[small] = pp + C * qq
            with np.errstate(divide="ignore", invalid="ignore"):
                der[small] = dpp + C * dqq
        big = ~small
        if np.any(big):
            z = sol.sol(y[big])
            val[big] = z[0] / A
            der[big] = z[1] / A
        return val, der

    return evaluate


def frobenius_constant(s: float, ymax: float = 30.0) -> float:
    """Coefficient C of the y^{2s} branch in theta = p + C q (ODE path)."""
    _ode_profile(s, ymax)
    ev = _ode_profile(s, ymax)
    y = 1e-3
    p, _, q, _ = frobenius_series(s, y)
    return float((ev(np.array([y]))[0][0] - p) / q)


# ---------------------------------------------------------------------------
# weighted quadrature in y

def _panel_rule(lo: float, hi: float, panels: int, order: int = 16):
    """Composite Gauss-Legendre nodes/weights in t = log y on [lo, hi] (log scale)."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def weighted_y_integral(fun, s: float, y_max: float, breakpoints=(), tol_exp: float = 1e-14):
    """Integral over (0, y_max] of y^{1-2s} fun(y) dy.

    Uses panels in t = log y so that the algebraic behaviour at y = 0 and the
    singular weight are handled without special rules; ``fun`` must be
    vectorized.  Integrands are assumed to behave like y^p with p >= -1 + 2s
    small powers near zero, which the log-scale lower cutoff accounts for.
    """
    # integrand * y behaves like y^{2 min(s, 1-s)} or better near 0
    decay = 2.0 * min(s, 1.0 - s)
    y_min = tol_exp ** (1.0 / decay)
    cuts = sorted({math.log(y_min), math.log(y_max), *[math.log(b) for b in breakpoints if y_min < b < y_max]})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        panels = max(1, int(math.ceil((hi - lo) / 0.5)))
        t, w = _panel_rule(lo, hi, panels)
        y = np.exp(t)
        total = total + np.sum(w * y ** (2.0 - 2.0 * s) * fun(y), axis=-1)
    return total


def decay_length(profile: ThetaProfile, sqrt_mu_min: float, threshold: float = 1e-12) -> float:
    """Y with theta(sqrt(mu_min) Y) below ``threshold``; squared integrands then < 1e-24."""
    z = 1.0
    while profile.value(z) > threshold:
        z *= 1.5
    return z / sqrt_mu_min


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtendedField:
    """v(x, y) = sum_k beta_k theta(sqrt(mu_k) y) e^{i omega k.x} / sqrt(T^N)."""

    base: FourierField
    cfg: TorusConfig
    profile: ThetaProfile

    @property
    def sqrt_mu(self) -> np.ndarray:
        return np.sqrt(symbol(self.cfg, self.base.lattice))

    def mode_profiles(self, y) -> np.ndarray:
        """theta_k(y) for every mode; shape ``(len(y),) + lattice.shape``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.profile.value(y.reshape((-1,) + (1,) * self.base.lattice.ndim) * self.sqrt_mu)

    def coefficients_at(self, y) -> np.ndarray:
        return self.mode_profiles(y) * self.base.coeffs

    def trace(self) -> FourierField:
        return FourierField(self.base.lattice, self.coefficients_at([0.0])[0], self.base.is_real)

    def evaluate(self, y, grid_sizes=None) -> np.ndarray:
        """v on the product grid; shape ``(len(y),) + grid``."""
        coeffs = self.coefficients_at(y)
        return np.stack([coeffs_to_grid(c, self.base.lattice, grid_sizes, real=self.base.is_real)
                         for c in coeffs])


def extend(u: FourierField, cfg: TorusConfig, profile: ThetaProfile | None = None) -> ExtendedField:
    if profile is None:
        profile = ThetaProfile(cfg.s)
    elif not math.isclose(profile.s, cfg.s):
        raise ValueError("profile order differs from cfg.s")
    return ExtendedField(u, cfg, profile)


def _mode_groups(lattice: ModeLattice):
    ksq = lattice.k_squared()
    return [(int(n), ksq == n) for n in np.unique(ksq)]


def cylinder_energy(v: ExtendedField, cfg: TorusConfig | None = None) -> float:
    """||v||^2 = iint y^{1-2s} (|grad v|^2 + m^2 v^2), mode by mode.

    Each mode contributes ``|beta_k|^2 int y^{1-2s} (mu_k theta_k^2 + theta_k'^2) dy``,
    evaluated by quadrature for every distinct |k|^2.
    """
    cfg = cfg or v.cfg
    s = cfg.s
    prof = v.profile
    total = 0.0
    weights = np.abs(v.base.coeffs) ** 2
    for n, mask in _mode_groups(v.base.lattice):
        mass = float(weights[mask].sum())
        if mass == 0.0:
            continue
        mu = cfg.omega**2 * n + cfg.m**2
        r = math.sqrt(mu)
        y_max = decay_length(prof, r)

        def integrand(y, r=r):
            th = prof.value(r * y)
            dth = r * prof.derivative(r * y)
            return r * r * th * th + dth * dth

        total += mass * float(weighted_y_integral(integrand, s, y_max))
    return total


def conormal_derivative(v: ExtendedField, cfg: TorusConfig | None = None,
                        y_sequence=None) -> FourierField:
    """Limit of -y^{1-2s} dv/dy as y -> 0, by two-term Richardson extrapolation.

    The leading correction of ``-y^{1-2s} theta_k'(y)`` is proportional to
    ``y^{2-2s}``, which fixes the extrapolation exponent.
    """
    cfg = cfg or v.cfg
    if y_sequence is None:
        y_sequence = [2.0**-j for j in range(8, 15)]
    ys = np.asarray(y_sequence, dtype=float)
    if ys.size < 2 or np.any(ys <= 0) or np.any(np.diff(ys) >= 0):
        raise ValueError("y_sequence must be positive and strictly decreasing")
    r = v.sqrt_mu
    s = cfg.s

    def flux(y):
        # -y^{1-2s} d/dy theta(r y) = r^{2s} * flux_profile(r y)
        return r ** (2 * s) * v.profile.flux(r * y) * v.base.coeffs

    y_big, y_small = ys[-2], ys[-1]
    ratio = y_big / y_small
    p = 2.0 - 2.0 * s
    fb, fs = flux(y_big), flux(y_small)
    limit = (ratio**p * fs - fb) / (ratio**p - 1.0)
    return FourierField(v.base.lattice, limit, v.base.is_real)


@dataclass(frozen=True)
class Bump:
    """Perturbation c * b(y) e^{i omega k.x}/sqrt(T^N) + conj, b = 1 - cos(2 pi y / Y) on [0, Y]."""

    k: tuple[int, ...]
    amplitude: complex
    support: float

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y <= self.support, 1.0 - np.cos(2 * np.pi * y / self.support), 0.0)

    def dprofile(self, y):
        y = np.asarray(y, dtype=float)
        w = 2 * np.pi / self.support
        return np.where(y <= self.support, w * np.sin(w * y), 0.0)

    @classmethod
    def cosine(cls, N: int, T: float, amplitude: float, support: float, axis: int = 0):
        """amplitude * b(y) * cos(omega x_axis)."""
        k = tuple(1 if i == axis else 0 for i in range(N))
        return cls(k, amplitude * math.sqrt(T**N) / 2.0, support)


@dataclass(frozen=True)
class TraceGap:
    lhs: float  # kappa_s |Tr z|^2_{H^s}
    rhs: float  # ||z||^2_X
    gap: float


def trace_inequality_check(v: ExtendedField, bumps=(), cfg: TorusConfig | None = None) -> TraceGap:
    """Compare kappa_s |Tr z|_{H^s}^2 with ||z||_X^2 for z = v + sum of bumps.

    Bumps vanish at y = 0, so Tr z = Tr v and the gap measures how far z is
    from the energy-minimizing extension.
    """
    cfg = cfg or v.cfg
    lat = v.base.lattice
    s = cfg.s
    # bump coefficients per mode; the k = 0 term of "c b + conj" is 2 Re c
    per_mode: dict[tuple, list] = {}
    for b in bumps:
        if all(ki == 0 for ki in b.k):
            per_mode.setdefault(lat.mode_index(b.k), []).append((b, 2.0 * np.real(b.amplitude)))
            continue
        neg = tuple(-ki for ki in b.k)
        per_mode.setdefault(lat.mode_index(b.k), []).append((b, b.amplitude))
        per_mode.setdefault(lat.mode_index(neg), []).append((b, np.conj(b.amplitude)))

    base_energy = cylinder_energy(_without_modes(v, per_mode.keys()), cfg)
    mu_all = symbol(cfg, lat)
    extra = 0.0
    for idx, items in per_mode.items():
        beta = v.base.coeffs[idx]
        mu = float(mu_all[idx])
        r = math.sqrt(mu)
        supports = [b.support for b, _ in items]
        y_max = max(decay_length(v.profile, r), max(supports))

        def integrand(y, r=r, beta=beta, items=items, mu=mu):
            g = beta * v.profile.value(r * y)
            dg = beta * r * v.profile.derivative(r * y)
            for b, c in items:
                g = g + c * b.profile(y)
                dg = dg + c * b.dprofile(y)
            return np.abs(dg) ** 2 + mu * np.abs(g) ** 2

        extra += float(weighted_y_integral(integrand, s, y_max, breakpoints=supports))
    rhs = base_energy + extra
    lhs = cfg.kappa_s * float(np.sum(multiplier(cfg, lat) * np.abs(v.base.coeffs) ** 2))
    return TraceGap(lhs, rhs, rhs - lhs)


def _without_modes(v: ExtendedField, indices) -> ExtendedField:
    """Copy of ``v`` with the listed modes removed (their energy is added separately)."""
    c = np.array(v.base.coeffs)
    for idx in indices:
        c[idx] = 0.0
    return ExtendedField(FourierField(v.base.lattice, c, v.base.is_real), v.cfg, v.profile)
