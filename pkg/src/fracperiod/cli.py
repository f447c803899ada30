"""``fracperiod`` command line: spectrum, check, solve, extend, verify, gradcheck.

Every run reads one JSON config (``--config``; defaults otherwise) and writes
deterministic JSON (and optionally CSV) into the output directory.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_all
from .config import ConfigError, RunConfig, load_config
from .energy import check_hypotheses, energy, gradient, hessian_vec, make_nonlinearity
from .extension import conormal_derivative, cylinder_energy, extend
from .fractional import SpectrumError, apply_operator, enumerate_spectrum, hs_norm, is_resonant
from .io import (SPECTRUM_HEADER, FormatError, profile_rows, read_fhst, spectrum_rows, write_csv,
                 write_fhst, write_json)
from .solver import (MultiplicityResult, NonConvergence, SolverError, independent_residual, morse_index,
                     solve_direct_min, solve_existence, solve_multiplicity, solve_newton, weak_form_defect)
from .torus import FourierField, ModeLattice, analyze, inner, l2_norm, synthesize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NONCONVERGENCE = 4
EXIT_VERIFY = 5

log = logging.getLogger("fracperiod")


class ExitError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _outdir(run: RunConfig) -> Path:
    path = Path(run.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _nonlinearity(run: RunConfig):
    try:
        return make_nonlinearity(run.nonlinearity, run.torus)
    except (ValueError, KeyError) as exc:
        raise ExitError(EXIT_CONFIG, f"nonlinearity: {exc}") from None


def _header(run: RunConfig, command: str) -> dict:
    config = run.to_json()
    del config["output_dir"]  # where files go is not part of the run
    return {"command": command, "version": __version__, "config": config}


# --- spectrum ------------------------------------------------------------------

def cmd_spectrum(run: RunConfig, args) -> int:
    cfg = run.torus
    lat = run.lattice()
    lam_max = max(filter(lambda v: v is not None, (run.spectrum.lambda_max, cfg.lambda_inf)))
    try:
        table = enumerate_spectrum(cfg, lat, count=run.spectrum.count, lambda_max=lam_max)
    except SpectrumError as exc:
        raise ExitError(EXIT_CONFIG, f"spectrum: {exc}") from None
    res = is_resonant(cfg.lambda_inf, table)
    warnings = []
    if res.resonant:
        warnings.append(f"resonance: lambda_inf = {cfg.lambda_inf:.17g} is the eigenvalue "
                        f"lambda_{res.nearest_index}; the existence results do not apply")
    report = _header(run, "spectrum")
    report.update({
        "certified_lambda": table.certified_lambda,
        "total": table.total,
        "spectrum": table.to_json(),
        "resonance": {"resonant": res.resonant, "distance": res.distance, "nearest": res.nearest,
                      "nearest_index": res.nearest_index, "below": res.below, "above": res.above},
        "warnings": warnings,
    })
    out = _outdir(run)
    write_json(out / "spectrum.json", report)
    if args.emit_csv:
        write_csv(out / "spectrum.csv", SPECTRUM_HEADER, spectrum_rows(table))
    for e in table.entries[:12]:
        print(f"lambda_{e.index_range[0]}..{e.index_range[1]} = {e.lam:.12g}  (x{e.multiplicity})")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {out / 'spectrum.json'}")
    return EXIT_HYPOTHESIS if (res.resonant and args.strict) else EXIT_OK


# --- check ---------------------------------------------------------------------

def _report(run, nl):
    try:
        return check_hypotheses(nl, run.torus, run.lattice())
    except SpectrumError as exc:
        raise ExitError(EXIT_CONFIG, f"spectrum: {exc}") from None


def _violations(rep) -> list[str]:
    bad = []
    if rep.resonant:
        bad.append("lambda_inf is an eigenvalue")
    for key in ("ratio_at_infinity_ok", "slope_at_zero_ok", "odd_ok", "F_at_zero_ok"):
        if not rep.asymptotics[key]:
            bad.append(f"asymptotic check failed: {key[:-3]}")
    return bad


def cmd_check(run: RunConfig, args) -> int:
    nl = _nonlinearity(run)
    rep = _report(run, nl)
    doc = _header(run, "check")
    doc["hypotheses"] = rep.to_json()
    out = _outdir(run)
    write_json(out / "hypotheses.json", doc)
    print(f"branch: {rep.branch}; resonant: {rep.resonant}; "
          f"gap condition: {rep.condition_holds} (h={rep.h}, k={rep.k}, pairs >= {rep.pair_bound})")
    bad = _violations(rep)
    for b in bad:
        print(f"warning: {b}", file=sys.stderr)
    print(f"wrote {out / 'hypotheses.json'}")
    return EXIT_HYPOTHESIS if (bad and args.strict) else EXIT_OK


# --- solve ---------------------------------------------------------------------

def _energy_levels(records, tol=1e-9):
    levels = []
    for e in sorted(r.energy for r in records):
        if not levels or abs(e - levels[-1]) > tol * max(1.0, abs(e)):
            levels.append(e)
    return levels


def cmd_solve(run: RunConfig, args) -> int:
    cfg, opts = run.torus, run.solver
    nl = _nonlinearity(run)
    rep = _report(run, nl)
    lat = run.lattice()
    result: MultiplicityResult | None = None
    failure = None
    records = []
    try:
        if run.solve.initial_constant is not None:
            init = FourierField.mode(lat, (0,) * cfg.N, run.solve.initial_constant * math.sqrt(cfg.volume))
            records = [solve_newton(nl, cfg, opts, init, tag=f"constant:{run.solve.initial_constant:g}")]
        elif rep.branch == "multiplicity":
            result = solve_multiplicity(nl, cfg, opts, lat, rep, run.sweep_lattice())
        elif rep.branch == "existence":
            result = solve_existence(nl, cfg, opts, lat, rep, run.sweep_lattice())
        elif rep.branch == "direct_minimization":
            records = [solve_direct_min(nl, cfg, opts, lat, report=rep)]
        else:
            failure = "resonant lambda_inf: no existence statement, nothing solved"
    except NonConvergence as exc:
        failure = f"nonconvergence: {exc}"
    except SolverError as exc:
        failure = f"solver error: {exc}"
    if result is not None:
        records = result.records

    out = _outdir(run)
    entries = []
    for i, rec in enumerate(records):
        name = f"solution_{i:03d}.fhst"
        samples = synthesize(rec.field)
        write_fhst(out / name, samples, cfg.T, cfg.m, cfg.s)
        if args.emit_csv:
            write_csv(out / f"solution_{i:03d}.csv",
                      [f"x{j + 1}" for j in range(cfg.N)] + ["u"],
                      profile_rows(samples, rec.field.lattice.grid_coordinates()))
        if run.solve.morse_index:
            rec.morse_index = morse_index(rec.field, nl, cfg, opts.pad)
        entry = rec.to_json()
        entry.update({
            "file": name,
            "grid_sizes": list(rec.field.lattice.grid_sizes),
            "independent_residual_2x": independent_residual(rec.field, nl, cfg, pad=opts.pad),
            "weak_form_defect": weak_form_defect(rec.field, nl, cfg, opts.pad),
        })
        entries.append(entry)

    doc = _header(run, "solve")
    doc.update({
        "hypotheses": rep.to_json(),
        "branch": rep.branch if run.solve.initial_constant is None else "newton_from_constant",
        "records": entries,
        "energy_levels": _energy_levels(records),
        "status": "ok" if records else "no_solution",
        "message": failure or "",
    })
    if result is not None:
        doc["sweep"] = {"distinct_pairs": result.pairs, "pair_bound": result.bound, "h": result.h,
                        "k": result.k, "seeds": result.seeds, "newton_runs": result.runs,
                        "failed_runs": result.failed_runs}
    write_json(out / "manifest.json", doc)
    nontrivial = sum(1 for r in records if r.l2 > opts.distinct_tol)
    print(f"branch {doc['branch']}: {len(records)} solutions ({nontrivial} non-trivial)")
    if result is not None:
        print(f"distinct pairs {result.pairs} (lower bound from the gap condition: {result.bound})")
    for r in records:
        print(f"  {r.init_tag}: J = {r.energy:.10g}, |u|_2 = {r.l2:.10g}, residual = {r.residual:.2e}")
    if failure:
        print(f"warning: {failure}", file=sys.stderr)
    print(f"wrote {out / 'manifest.json'}")
    if args.strict:
        if rep.branch == "none" or _violations(rep):
            return EXIT_HYPOTHESIS
        if failure or not records:
            return EXIT_NONCONVERGENCE
    return EXIT_OK


# --- extend --------------------------------------------------------------------

def _trace_field(run: RunConfig, rng) -> FourierField:
    cfg = run.torus
    src = run.extend.input
    if src is None:
        lat = ModeLattice.cube(cfg.N, run.extend.cutoff, cfg.T)
        return FourierField.random(lat, rng, decay=run.extend.decay)
    try:
        data = read_fhst(src)
    except (OSError, FormatError) as exc:
        raise ExitError(EXIT_CONFIG, f"extend.input: {exc}") from None
    if data.y_nodes is not None or len(data.grid_sizes) != cfg.N:
        raise ExitError(EXIT_CONFIG, f"extend.input: expected an {cfg.N}-dimensional field without y block")
    if (data.T, data.m, data.s) != (cfg.T, cfg.m, cfg.s):
        raise ExitError(EXIT_CONFIG, f"extend.input: file has T={data.T}, m={data.m}, s={data.s}, "
                                     f"config has T={cfg.T}, m={cfg.m}, s={cfg.s}")
    n = data.grid_sizes
    lat = ModeLattice(tuple((k - 1) // 2 for k in n), cfg.T, n)
    return analyze(data.samples, lat)


def cmd_extend(run: RunConfig, args) -> int:
    cfg = run.torus
    rng = np.random.default_rng(run.seed)
    u = _trace_field(run, rng)
    v = extend(u, cfg)
    y = np.linspace(0.0, run.extend.y_max, run.extend.y_count)
    values = v.evaluate(y)
    out = _outdir(run)
    write_fhst(out / "extension.fhst", values, cfg.T, cfg.m, cfg.s, y_nodes=y)
    try:
        co = conormal_derivative(v, cfg, run.extend.y_conormal)
    except ValueError as exc:
        raise ExitError(EXIT_CONFIG, f"extend.y_conormal: {exc}") from None
    target = cfg.kappa_s * apply_operator(u, cfg).coeffs
    E = cylinder_energy(v, cfg)
    hs2 = hs_norm(u, cfg) ** 2
    doc = _header(run, "extend")
    doc.update({
        "file": "extension.fhst",
        "y_nodes": y,
        "grid_sizes": list(u.lattice.grid_sizes),
        "trace_l2": l2_norm(u),
        "cylinder_energy": E,
        "kappa_hs_norm_sq": cfg.kappa_s * hs2,
        "energy_ratio": E / (cfg.kappa_s * hs2) if hs2 > 0 else None,
        "conormal_relative_error": float(np.max(np.abs(co.coeffs - target)) / max(np.max(np.abs(target)), 1e-300)),
        "trace_error": float(np.max(np.abs(values[0] - synthesize(u)))),
    })
    write_json(out / "extension.json", doc)
    if args.emit_csv:
        coords = (y,) + u.lattice.grid_coordinates()
        write_csv(out / "extension.csv", ["y"] + [f"x{j + 1}" for j in range(cfg.N)] + ["v"],
                  profile_rows(values, coords))
    print(f"energy / (kappa_s |u|^2_Hs) = {doc['energy_ratio']!r}; "
          f"conormal relative error {doc['conormal_relative_error']:.2e}")
    print(f"wrote {out / 'extension.fhst'}")
    return EXIT_OK


# --- verify --------------------------------------------------------------------

def cmd_verify(run: RunConfig, args) -> int:
    checks = run_all(run)
    failed = [c for c in checks if not c.passed]
    doc = _header(run, "verify")
    doc.update({"checks": [c.to_json() for c in checks], "passed": len(checks) - len(failed),
                "failed": len(failed)})
    out = _outdir(run)
    write_json(out / "verify.json", doc)
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        extra = f"  [{c.detail}]" if c.detail else ""
        print(f"{mark}  {c.module:<22} {c.name:<58} {c.value:.3e} (tol {c.tolerance:.1e}){extra}")
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed; wrote {out / 'verify.json'}")
    return EXIT_VERIFY if failed else EXIT_OK


# --- gradcheck -----------------------------------------------------------------

def cmd_gradcheck(run: RunConfig, args) -> int:
    cfg = run.torus
    nl = _nonlinearity(run)
    gc = run.gradcheck
    lat = ModeLattice.cube(cfg.N, gc.cutoff, cfg.T)
    rng = np.random.default_rng(run.seed)
    eps = gc.step
    rows = []
    for _ in range(gc.trials):
        u = FourierField.random(lat, rng, decay=1.0)
        d = FourierField.random(lat, rng, decay=1.0)
        fd = (energy(u + eps * d, nl, cfg) - energy(u - eps * d, nl, cfg)) / (2 * eps)
        an = inner(gradient(u, nl, cfg), d)
        gp, gm = gradient(u + eps * d, nl, cfg).coeffs, gradient(u - eps * d, nl, cfg).coeffs
        hv = hessian_vec(u, d, nl, cfg).coeffs
        rows.append({
            "directional_derivative": an,
            "finite_difference": fd,
            "gradient_rel_error": abs(fd - an) / max(abs(an), 1e-300),
            "hessian_rel_error": float(np.max(np.abs((gp - gm) / (2 * eps) - hv)) / max(np.max(np.abs(hv)), 1e-300)),
        })
    worst_g = max(r["gradient_rel_error"] for r in rows)
    worst_h = max(r["hessian_rel_error"] for r in rows)
    doc = _header(run, "gradcheck")
    doc.update({"trials": rows, "max_gradient_rel_error": worst_g, "max_hessian_rel_error": worst_h,
                "tolerance": gc.tolerance})
    out = _outdir(run)
    write_json(out / "gradcheck.json", doc)
    print(f"max relative error: gradient {worst_g:.3e}, Hessian-vector {worst_h:.3e} (tol {gc.tolerance:.1e})")
    return EXIT_OK if max(worst_g, worst_h) <= gc.tolerance else EXIT_VERIFY


COMMANDS = {
    "spectrum": (cmd_spectrum, "eigenvalues with multiplicities and a resonance check"),
    "check": (cmd_check, "hypothesis report: resonance, gap condition, asymptotics"),
    "solve": (cmd_solve, "find weak solutions; writes manifest.json and FHST fields"),
    "extend": (cmd_extend, "extend a trace into the half-cylinder and dump it"),
    "verify": (cmd_verify, "run the invariant suite; exit 5 on any failure"),
    "gradcheck": (cmd_gradcheck, "finite-difference check of gradient and Hessian"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--output-dir", help="overrides output_dir from the config")
    common.add_argument("--seed", type=int, help="overrides seed from the config")
    common.add_argument("--strict", action="store_true",
                        help="exit 3 on hypothesis violations and 4 on solver failure")
    common.add_argument("--emit-csv", action="store_true", help="also write CSV tables")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="fracperiod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config, seed=args.seed, output_dir=args.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command][0](run, args)
    except ExitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
