"""Invariant suite run by ``fracperiod verify``.

Each check returns a :class:`Check` with the measured value, the tolerance it
is compared against and a verdict.  Random samples come from one seeded
generator, so a given config always yields the same numbers.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .energy import Zero, check_hypotheses, energy, gradient, hessian_vec, make_nonlinearity
from .extension import (Bump, ThetaProfile, conormal_derivative, cylinder_energy, extend,
                        trace_inequality_check)
from .fractional import (apply_operator, brute_force_eigenvalues, eigenspace_split, enumerate_spectrum,
                         hs_norm, multiplier, project, real_eigenbasis)
from .io import dumps, read_fhst, write_fhst
from .solver import (NonConvergence, SolverError, StateSpace, hessian_extremes,
                     independent_residual, newton_iterate, solve_direct_min, solve_existence,
                     solve_multiplicity, weak_form_defect)
from .torus import FourierField, ModeLattice, TorusConfig, analyze, inner, l2_norm, synthesize


@dataclass
class Check:
    module: str
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_json(self) -> dict:
        return {"module": self.module, "name": self.name, "value": self.value,
                "tolerance": self.tolerance, "passed": self.passed, "detail": self.detail}


def _le(module, name, value, tol, detail=""):
    value = float(value)
    return Check(module, name, value, tol, bool(value <= tol), detail)


def _ge(module, name, value, tol, detail=""):
    """Pass when value >= tol (used for slacks and strict positivity)."""
    value = float(value)
    return Check(module, name, value, tol, bool(value >= tol), detail)


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def _random_in_span(basis, rng):
    c = np.zeros_like(basis[0].field.coeffs)
    for e in basis:
        c = c + rng.normal() * e.field.coeffs
    return FourierField(basis[0].field.lattice, c)


# --- torus_spectral ------------------------------------------------------------

def torus_checks(cfg: TorusConfig, lat: ModeLattice, rng, trials: int):
    out = []
    rt = pars = herm = 0.0
    for _ in range(trials):
        u = FourierField.random(lat, rng, decay=1.0)
        samples = synthesize(u)
        rt = max(rt, _rel(analyze(samples, lat).coeffs, u.coeffs))
        grid_l2 = math.sqrt(np.sum(samples**2) * lat.cell_volume)
        pars = max(pars, abs(grid_l2 - l2_norm(u)) / l2_norm(u))
        herm = max(herm, u.hermitian_defect())
    out.append(_le("torus_spectral", "analyze(synthesize(u)) == u", rt, 1e-13))
    out.append(_le("torus_spectral", "Parseval on the grid", pars, 1e-13))
    out.append(_le("torus_spectral", "real fields are Hermitian", herm, 0.0))
    return out


# --- fractional_operator -----------------------------------------------------

def fractional_checks(cfg: TorusConfig, lat: ModeLattice, rng, trials: int):
    out = []
    radius = min(lat.half_extents)
    count = min(30, int(np.sum(lat.k_squared() <= radius * radius)))
    try:
        table = enumerate_spectrum(cfg, lat, count=count)
        brute = brute_force_eigenvalues(cfg, lat, table.total)
        diff = float(np.max(np.abs(table.eigenvalues() - np.array(brute))))
        out.append(_le("fractional_operator", "spectrum equals brute-force sort", diff, 0.0))
    except Exception as exc:  # a too-small verify lattice is a config problem, report it
        out.append(Check("fractional_operator", "spectrum equals brute-force sort", math.nan, 0.0, False, str(exc)))
        return out
    lam_min = float(np.min(multiplier(cfg, lat)))
    out.append(_ge("fractional_operator", "eigenvalues >= m^{2s}", lam_min - cfg.m ** (2 * cfg.s), 0.0))

    sym = pos = 0.0
    for _ in range(trials):
        u = FourierField.random(lat, rng, decay=1.0)
        v = FourierField.random(lat, rng, decay=1.0)
        a, b = inner(apply_operator(u, cfg), v), inner(u, apply_operator(v, cfg))
        sym = max(sym, abs(a - b) / max(abs(a), 1e-300))
        pos = min(pos, inner(apply_operator(u, cfg), u))
    out.append(_le("fractional_operator", "operator self-adjoint", sym, 1e-13))
    out.append(_ge("fractional_operator", "operator positive", pos, 0.0))

    kap = cfg.kappa_s
    lams = table.eigenvalues()
    for h in (1, 5, 9):
        if h + 1 > table.total:
            continue
        split = eigenspace_split(cfg, lat, h)
        lo_slack = hi_slack = perp_slack = math.inf
        pyth = 0.0
        for _ in range(trials):
            u = _random_in_span(split.basis, rng)
            E = cylinder_energy(extend(u, cfg), cfg)
            l2 = l2_norm(u) ** 2
            lo_slack = min(lo_slack, E - kap * cfg.m ** (2 * cfg.s) * l2)
            hi_slack = min(hi_slack, kap * split.lambda_h * l2 - E)
            w = project(FourierField.random(lat, rng, decay=1.0), split, "Vh_perp")
            Ew = cylinder_energy(extend(w, cfg), cfg)
            perp_slack = min(perp_slack, Ew / kap - lams[h] * l2_norm(w) ** 2)
            r = FourierField.random(lat, rng, decay=1.0)
            p, q = project(r, split, "Vh"), project(r, split, "Vh_perp")
            pyth = max(pyth, abs(l2_norm(p) ** 2 + l2_norm(q) ** 2 - l2_norm(r) ** 2) / l2_norm(r) ** 2)
        out.append(_ge("fractional_operator", f"norm sandwich lower, h={h}", lo_slack, -1e-10))
        out.append(_ge("fractional_operator", f"norm sandwich upper, h={h}", hi_slack, -1e-10))
        out.append(_ge("fractional_operator", f"complement bound, h={h}", perp_slack, -1e-10))
        out.append(_le("fractional_operator", f"projection Pythagoras, h={h}", pyth, 1e-12))
    return out


# --- extension_cylinder ------------------------------------------------------

def extension_checks(cfg: TorusConfig, lat: ModeLattice, rng, trials: int):
    out = []
    y = np.geomspace(1e-6, 30.0, 400)
    for s in sorted({0.25, 0.5, 0.75, cfg.s}):
        pb, po = ThetaProfile(s, "bessel"), ThetaProfile(s, "ode")
        vb, vo = pb.value(y), po.value(y)
        out.append(_le("extension_cylinder", f"theta closed form vs ODE integration, s={s:g}",
                       float(np.max(np.abs(vb - vo) / vb)), 1e-8))
        dv = np.diff(pb.value(np.linspace(0, 50, 2001)[1:]))
        ok = bool(np.all(pb.value(y) > 0) and np.all(dv < 0))
        out.append(Check("extension_cylinder", f"theta positive and decreasing, s={s:g}",
                         float(np.max(dv)), 0.0, ok))
        ys = 2.0 ** -np.arange(10, 16)
        f1, f2 = pb.flux(ys[-2]), pb.flux(ys[-1])
        p = 2 - 2 * s
        lim = (2**p * f2 - f1) / (2**p - 1)
        kap = TorusConfig(cfg.T, cfg.N, cfg.m, s).kappa_s
        out.append(_le("extension_cylinder", f"flux limit equals kappa_s, s={s:g}", abs(lim - kap) / kap, 1e-6))
    if cfg.s == 0.5:
        yy = np.linspace(0, 20, 2001)
        out.append(_le("extension_cylinder", "theta = exp(-y) at s=1/2",
                       float(np.max(np.abs(ThetaProfile(0.5).value(yy) - np.exp(-yy)))), 1e-10))

    ratio = conorm = trace = lin = 0.0
    for _ in range(trials):
        u = FourierField.random(lat, rng, decay=1.5)
        v = extend(u, cfg)
        ratio = max(ratio, abs(cylinder_energy(v, cfg) / (cfg.kappa_s * hs_norm(u, cfg) ** 2) - 1))
        ref = cfg.kappa_s * apply_operator(u, cfg).coeffs
        conorm = max(conorm, _rel(conormal_derivative(v, cfg).coeffs, ref))
        trace = max(trace, float(np.max(np.abs(v.coefficients_at(0.0) - u.coeffs))))
        w = FourierField.random(lat, rng, decay=1.5)
        yy = np.array([0.1, 1.0])
        lin = max(lin, float(np.max(np.abs(extend(u + w, cfg).coefficients_at(yy)
                                           - v.coefficients_at(yy) - extend(w, cfg).coefficients_at(yy)))))
    out.append(_le("extension_cylinder", "energy identity |ratio - 1|", ratio, 1e-6))
    out.append(_le("extension_cylinder", "conormal limit vs kappa_s A u", conorm, 1e-5))
    out.append(_le("extension_cylinder", "trace of extension is u", trace, 1e-15))
    out.append(_le("extension_cylinder", "extension is linear", lin, 1e-13))

    u = FourierField.random(lat, rng, decay=1.5)
    v = extend(u, cfg)
    zero_gap = abs(trace_inequality_check(v, (), cfg).gap)
    out.append(_le("extension_cylinder", "trace gap without perturbation", zero_gap, 1e-6))
    gaps = [trace_inequality_check(v, (Bump.cosine(cfg.N, cfg.T, a, 2.0),), cfg).gap for a in (0.1, 0.2)]
    min_gap = math.inf
    for _ in range(trials):
        k = tuple(int(x) for x in rng.integers(-2, 3, size=cfg.N))
        amp = complex(rng.normal(), rng.normal()) * 0.1
        min_gap = min(min_gap, trace_inequality_check(v, (Bump(k, amp, float(rng.uniform(0.5, 3))),), cfg).gap)
    out.append(_ge("extension_cylinder", "trace gap positive under perturbation", min_gap, 1e-12))
    out.append(Check("extension_cylinder", "trace gap grows with amplitude", gaps[1] - gaps[0], 0.0,
                     bool(0 < gaps[0] < gaps[1])))
    return out


# --- energy_functional -------------------------------------------------------

def energy_checks(cfg: TorusConfig, lat: ModeLattice, nl, rng, trials: int, step: float = 1e-5):
    out = []
    x = lat.grid_coordinates()
    even = odd_grad = 0.0
    fd_g = fd_h = sym = 0.0
    for _ in range(trials):
        u = FourierField.random(lat, rng, decay=1.0, scale=1.0)
        d = FourierField.random(lat, rng, decay=1.0)
        w = FourierField.random(lat, rng, decay=1.0)
        if nl.odd:
            even = max(even, abs(energy(u, nl, cfg) - energy(-u, nl, cfg)))
            odd_grad = max(odd_grad, float(np.max(np.abs(gradient(-u, nl, cfg).coeffs + gradient(u, nl, cfg).coeffs))))
        fd = (energy(u + step * d, nl, cfg) - energy(u - step * d, nl, cfg)) / (2 * step)
        an = inner(gradient(u, nl, cfg), d)
        fd_g = max(fd_g, abs(fd - an) / max(abs(an), 1e-12))
        gp, gm = gradient(u + step * d, nl, cfg).coeffs, gradient(u - step * d, nl, cfg).coeffs
        hv = hessian_vec(u, d, nl, cfg).coeffs
        fd_h = max(fd_h, _rel((gp - gm) / (2 * step), hv))
        a = inner(hessian_vec(u, w, nl, cfg), d)
        b = inner(w, hessian_vec(u, d, nl, cfg))
        sym = max(sym, abs(a - b) / max(abs(a), 1e-12))
    if nl.odd:
        out.append(_le("energy_functional", "J(u) == J(-u)", even, 0.0))
        out.append(_le("energy_functional", "J'(-u) == -J'(u)", odd_grad, 0.0))
    out.append(_le("energy_functional", "gradient vs central differences", fd_g, 1e-6))
    out.append(_le("energy_functional", "Hessian-vector vs central differences", fd_h, 1e-6))
    out.append(_le("energy_functional", "Hessian symmetric", sym, 1e-10))

    t = np.linspace(-50, 50, 2001)
    xs = tuple(np.full_like(t, 0.3 * (i + 1)) for i in range(cfg.N))
    dF = (nl.F(xs, t + 1e-6) - nl.F(xs, t - 1e-6)) / 2e-6
    out.append(_le("energy_functional", "dF/dt == f", float(np.max(np.abs(dF - nl.f(xs, t)))), 1e-6))
    diag = check_hypotheses(nl, cfg, lat).asymptotics
    for key in ("ratio_at_infinity_ok", "slope_at_zero_ok", "odd_ok", "F_at_zero_ok"):
        out.append(Check("energy_functional", f"asymptotics: {key[:-3]}", float(diag[key]), 1.0, bool(diag[key])))
    if nl.kind == "rational_odd":
        c1 = abs(nl.lambda0) / 2
        out.append(_le("energy_functional", "|f| <= |a|/2", float(np.max(np.abs(nl.f(xs, t)))) - c1, 1e-15))
        out.append(_le("energy_functional", "|F| <= c1 (1 + t^2)",
                       float(np.max(np.abs(nl.F(xs, t)) - c1 * (1 + t**2))), 0.0))
    return out


def coercivity_checks(cfg: TorusConfig, lat: ModeLattice, nl, rng, trials: int):
    """Energy bounded below on the high-mode complement; unbounded below on low-mode rays."""
    out = []
    rep = check_hypotheses(nl, cfg, lat)
    if rep.resonant:
        return out
    table = enumerate_spectrum(cfg, lat, lambda_max=cfg.lambda_inf + 2 * abs(nl.lambda0) + 1)
    lams = table.eigenvalues()
    kap = cfg.kappa_s
    if nl.kind == "rational_odd":
        c1 = abs(nl.lambda0) / 2
        h = int(np.sum(lams <= cfg.lambda_inf + c1))
        split = eigenspace_split(cfg, lat, max(h, 1))
        bound = -kap * c1 * cfg.volume
        worst = math.inf
        for _ in range(trials):
            w = project(FourierField.random(lat, rng, decay=1.0), split, "Vh_perp")
            for scale in (0.1, 1.0, 10.0, 100.0):
                worst = min(worst, energy((scale / l2_norm(w)) * w, nl, cfg) - bound)
        out.append(_ge("energy_functional", f"J bounded below on V_h complement (h={h})", worst, 0.0))
    if rep.k:
        basis = real_eigenbasis(cfg, lat, rep.k)
        reached = 0
        for _ in range(trials):
            v = _random_in_span(basis, rng)
            v = (1.0 / l2_norm(v)) * v
            for t in np.geomspace(1, 1e4, 41):
                if energy(t * v, nl, cfg) < -1e3:
                    reached += 1
                    break
        out.append(Check("energy_functional", f"J < -1e3 along rays in V_k (k={rep.k}) before 1e4",
                         float(reached), float(trials), reached == trials))
    return out


# --- critical_point_solver ---------------------------------------------------

def solver_checks(run, nl, rng):
    cfg, opts = run.torus, run.solver
    out = []
    lat = run.lattice()
    rep = check_hypotheses(nl, cfg, lat)
    tol = opts.tol

    # linear sanity: f = 0 converges to 0 in at most two Newton steps
    if not rep.resonant:
        small = ModeLattice.cube(cfg.N, run.verify.cutoff, cfg.T)
        space = StateSpace(cfg, small, Zero(), opts.pad)
        worst = 0
        for _ in range(run.verify.trials):
            rec = newton_iterate(space, space.to_state(FourierField.random(small, rng, decay=1.0)), opts)
            worst = max(worst, rec.iterations if rec.l2 <= 1e-8 else 99)
        out.append(_le("critical_point_solver", "f=0: Newton reaches 0 within 2 steps", worst, 2))

    t0 = time.perf_counter()
    try:
        if rep.branch == "multiplicity":
            records = solve_multiplicity(nl, cfg, opts, lat, rep, run.sweep_lattice()).records
        elif rep.branch == "existence":
            records = solve_existence(nl, cfg, opts, lat, rep, run.sweep_lattice()).records
        elif rep.branch == "direct_minimization":
            records = [solve_direct_min(nl, cfg, opts, lat, report=rep)]
        else:
            out.append(Check("critical_point_solver", "solver branch", 0.0, 0.0, True,
                             "resonant: no existence statement, solver checks skipped"))
            return out
    except (SolverError, NonConvergence) as exc:
        out.append(Check("critical_point_solver", "solver run", math.nan, 0.0, False, str(exc)))
        return out
    elapsed = time.perf_counter() - t0
    nontrivial = [r for r in records if r.l2 > opts.distinct_tol]
    out.append(Check("critical_point_solver", f"solutions found ({rep.branch})", float(len(records)), 1.0,
                     len(records) >= 1, f"{elapsed:.1f}s"))
    if not records:
        return out
    out.append(_le("critical_point_solver", "max residual", max(r.residual for r in records), tol))
    out.append(_le("critical_point_solver", "max independent 2x residual",
                   max(independent_residual(r.field, nl, cfg, pad=opts.pad) for r in records), 10 * tol))
    out.append(_le("critical_point_solver", "max weak-form defect over lattice modes",
                   max(weak_form_defect(r.field, nl, cfg, opts.pad) for r in records), tol))
    if nl.odd and rep.branch != "direct_minimization":
        states = [(r.field.coeffs, r.energy, r.residual) for r in records]
        closed = all(any(np.array_equal(c2, -c) and e2 == e and r2 == r for c2, e2, r2 in states)
                     for c, e, r in states)
        out.append(Check("critical_point_solver", "set closed under negation, equal energies",
                         float(closed), 1.0, closed))

    moved = 0.0
    for r in records:
        if r.sign < 0:
            continue
        fine = r.field.embed(r.field.lattice.refined(2))
        try:
            rr = newton_iterate(StateSpace(cfg, fine.lattice, nl, opts.pad),
                                StateSpace(cfg, fine.lattice, nl, opts.pad).to_state(fine), opts)
            moved = max(moved, l2_norm(rr.field - fine))
        except NonConvergence:
            moved = math.inf
    out.append(_le("critical_point_solver", "grid refinement moves solutions (L2)", moved, 1e-6))

    if rep.branch in ("existence", "multiplicity") and nontrivial:
        lo, hi = hessian_extremes(nontrivial[0].field, nl, cfg, opts.pad)
        out.append(Check("critical_point_solver", "Hessian indefinite at a found solution",
                         lo, 0.0, bool(lo < 0 < hi), f"extreme eigenvalues {lo:.4g}, {hi:.4g}"))
    return out


# --- cli_io --------------------------------------------------------------------

def io_checks(cfg: TorusConfig, lat: ModeLattice, rng):
    out = []
    samples = synthesize(FourierField.random(lat, rng, decay=1.0))
    with tempfile.TemporaryDirectory() as tmp:
        p = write_fhst(Path(tmp) / "f.fhst", samples, cfg.T, cfg.m, cfg.s)
        back = read_fhst(p)
        same = bool(np.array_equal(back.samples, samples) and (back.T, back.m, back.s) == (cfg.T, cfg.m, cfg.s))
        ys = np.linspace(0, 1, 3)
        stack = np.stack([samples * k for k in range(3)])
        p2 = write_fhst(Path(tmp) / "g.fhst", stack, cfg.T, cfg.m, cfg.s, y_nodes=ys)
        b2 = read_fhst(p2)
        same2 = bool(np.array_equal(b2.samples, stack) and np.array_equal(b2.y_nodes, ys))
    out.append(Check("cli_io", "FHST round trip bit-exact", float(same), 1.0, same))
    out.append(Check("cli_io", "FHST y-block round trip bit-exact", float(same2), 1.0, same2))
    doc = {"x": [0.1, 1 / 3, 2.0**-40], "n": 3}
    stable = dumps(doc) == dumps(doc) and "0.33333333333333331" in dumps(doc)
    out.append(Check("cli_io", "JSON floats at 17 significant digits", float(stable), 1.0, stable))
    return out


def run_all(run, include_solver: bool = True) -> list[Check]:
    cfg = run.torus
    nl = make_nonlinearity(run.nonlinearity, cfg)
    rng = np.random.default_rng(run.seed)
    lat = ModeLattice.cube(cfg.N, run.verify.cutoff, cfg.T)
    n = run.verify.trials
    checks = []
    checks += torus_checks(cfg, lat, rng, n)
    checks += fractional_checks(cfg, lat, rng, n)
    checks += extension_checks(cfg, lat, rng, n)
    checks += energy_checks(cfg, lat, nl, rng, n, run.gradcheck.step)
    checks += coercivity_checks(cfg, lat, nl, rng, n)
    if include_solver:
        checks += solver_checks(run, nl, rng)
    checks += io_checks(cfg, lat, rng)
    return checks
