"""Run configuration: one JSON document, strict keys, documented defaults.

Defaults reproduce the reference fixture: N=2, T=2*pi, m=1, s=1/2,
lambda_inf=2, f(t) = -1.5 t/(1+t^2), band limit 48 (sweep at 16).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .solver import SolverOptions
from .torus import ModeLattice, TorusConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


_PI = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


def _number(value, where: str) -> float:
    """Accept plain numbers and strings such as "2pi" or "0.5*pi"."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI.match(value)
        if m:
            coef = m.group(1)
            return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    raise ConfigError(f"{where}: expected a number, got {value!r}")


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    return value


def _block(doc, where: str, allowed) -> dict:
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {where + '.' if where else ''}{unknown[0]!r}"
                          f" (allowed: {', '.join(sorted(allowed))})")
    return doc


@dataclass(frozen=True)
class GridConfig:
    half_extents: tuple[int, ...] | None = None  # per-axis band limit M_i
    cutoff: int = 48  # used for every axis when half_extents is absent
    grid_sizes: tuple[int, ...] | None = None  # default 2M+1
    pad: int = 2  # zero-padding factor for the nonlinear term

    def lattice(self, cfg: TorusConfig, cutoff: int | None = None) -> ModeLattice:
        if cutoff is not None:
            return ModeLattice((cutoff,) * cfg.N, cfg.T)
        M = self.half_extents or (self.cutoff,) * cfg.N
        if len(M) != cfg.N:
            raise ConfigError(f"grid.half_extents has {len(M)} entries, N = {cfg.N}")
        return ModeLattice(tuple(M), cfg.T, self.grid_sizes)


@dataclass(frozen=True)
class SpectrumConfig:
    count: int = 30
    lambda_max: float | None = None


@dataclass(frozen=True)
class SolveConfig:
    sweep_cutoff: int | None = 16  # coarse lattice for seed sweeps; null = same as grid
    initial_constant: float | None = None  # single Newton run from u = const instead of the branch default
    morse_index: bool = False


@dataclass(frozen=True)
class ExtendConfig:
    input: str | None = None  # FHST file with the trace; default a random field
    cutoff: int = 8  # band limit of the random trace
    decay: float = 2.0  # coefficient decay exponent of the random trace
    y_max: float = 5.0
    y_count: int = 21
    y_conormal: tuple[float, ...] | None = None  # decreasing; default 2^-8 .. 2^-14


@dataclass(frozen=True)
class GradcheckConfig:
    trials: int = 10
    step: float = 1e-5
    cutoff: int = 6
    tolerance: float = 1e-6


@dataclass(frozen=True)
class VerifyConfig:
    trials: int = 20
    cutoff: int = 6


@dataclass(frozen=True)
class RunConfig:
    torus: TorusConfig = field(default_factory=lambda: TorusConfig(2 * math.pi, 2, 1.0, 0.5, 2.0))
    grid: GridConfig = field(default_factory=GridConfig)
    nonlinearity: dict = field(default_factory=lambda: {"kind": "rational_odd", "a": -1.5})
    solver: SolverOptions = field(default_factory=SolverOptions)
    solve: SolveConfig = field(default_factory=SolveConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    extend: ExtendConfig = field(default_factory=ExtendConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output_dir: str = "fracperiod_out"
    seed: int = 0

    def lattice(self) -> ModeLattice:
        return self.grid.lattice(self.torus)

    def sweep_lattice(self) -> ModeLattice | None:
        c = self.solve.sweep_cutoff
        return None if c is None else self.grid.lattice(self.torus, cutoff=c)

    def to_json(self) -> dict:
        t = self.torus
        return {
            "torus": {"T": t.T, "N": t.N, "m": t.m, "s": t.s, "lambda_inf": t.lambda_inf},
            "grid": _as_dict(self.grid),
            "nonlinearity": dict(self.nonlinearity),
            "solver": _as_dict(self.solver),
            "solve": _as_dict(self.solve),
            "spectrum": _as_dict(self.spectrum),
            "extend": _as_dict(self.extend),
            "gradcheck": _as_dict(self.gradcheck),
            "verify": _as_dict(self.verify),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def _as_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


_NL_KEYS = {
    "rational_odd": {"kind", "a"},
    "rational_odd_modulated": {"kind", "a", "b"},
    "custom": {"kind", "t", "f", "lambda0", "odd"},
    "zero": {"kind"},
}


def _parse_nonlinearity(doc) -> dict:
    doc = _block(doc, "nonlinearity", set().union(*_NL_KEYS.values()))
    kind = doc.get("kind", "rational_odd")
    if kind not in _NL_KEYS:
        raise ConfigError(f"nonlinearity.kind: unknown kind {kind!r} (allowed: {', '.join(_NL_KEYS)})")
    _block(doc, f"nonlinearity[{kind}]", _NL_KEYS[kind])
    out = {"kind": kind}
    if kind in ("rational_odd", "rational_odd_modulated"):
        out["a"] = _number(doc.get("a", -1.5), "nonlinearity.a")
    if kind == "rational_odd_modulated":
        out["b"] = _number(doc.get("b", 0.0), "nonlinearity.b")
    if kind == "custom":
        for key in ("t", "f", "lambda0"):
            if key not in doc:
                raise ConfigError(f"nonlinearity.{key}: required for kind 'custom'")
        t = [_number(v, "nonlinearity.t") for v in doc["t"]]
        f = [_number(v, "nonlinearity.f") for v in doc["f"]]
        if len(t) != len(f) or len(t) < 4:
            raise ConfigError("nonlinearity.t/f: need equal-length tables with at least 4 points")
        out.update(t=t, f=f, lambda0=_number(doc["lambda0"], "nonlinearity.lambda0"),
                   odd=_bool(doc.get("odd", True), "nonlinearity.odd"))
    return out


def _simple(cls, doc, where: str, converters: dict):
    doc = _block(doc, where, {f.name for f in fields(cls)})
    kwargs = {}
    for key, value in doc.items():
        conv = converters.get(key)
        kwargs[key] = conv(value, f"{where}.{key}") if conv else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _opt(conv):
    return lambda v, w: None if v is None else conv(v, w)


def _ints(v, w):
    if not isinstance(v, list):
        raise ConfigError(f"{w}: expected a list of integers")
    return tuple(_int(x, w) for x in v)


def _floats(v, w):
    if not isinstance(v, list):
        raise ConfigError(f"{w}: expected a list of numbers")
    return tuple(_number(x, w) for x in v)


def _str(v, w):
    if not isinstance(v, str):
        raise ConfigError(f"{w}: expected a string")
    return v


_SOLVER_CONV = {
    "tol": _number, "max_iter": _int, "linear_rtol": _number, "linear_max_iter": _int,
    "deflation_power": _number, "deflation_shift": _number, "amplitudes": _floats,
    "max_solutions": _int, "distinct_tol": _number, "use_deflation": _bool,
    "retries_per_seed": _int, "stall_iter": _int, "pad": _int, "seed": _int,
}


def parse_config(doc: dict, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    top = _block(doc, "", {f.name for f in fields(RunConfig)})
    tdoc = _block(top.get("torus"), "torus", {"T", "N", "m", "s", "lambda_inf"})
    try:
        torus = TorusConfig(
            _number(tdoc.get("T", 2 * math.pi), "torus.T"),
            _int(tdoc.get("N", 2), "torus.N"),
            _number(tdoc.get("m", 1.0), "torus.m"),
            _number(tdoc.get("s", 0.5), "torus.s"),
            _number(tdoc.get("lambda_inf", 2.0), "torus.lambda_inf"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"torus: {exc}") from None
    grid = _simple(GridConfig, top.get("grid"), "grid", {
        "half_extents": _opt(_ints), "cutoff": _int, "grid_sizes": _opt(_ints), "pad": _int})
    solver = _simple(SolverOptions, top.get("solver"), "solver", _SOLVER_CONV)
    if "pad" not in (top.get("solver") or {}):
        solver = replace(solver, pad=grid.pad)
    run_seed = _int(top.get("seed", 0), "seed") if seed is None else seed
    solver = replace(solver, seed=run_seed)
    cfg = RunConfig(
        torus=torus,
        grid=grid,
        nonlinearity=_parse_nonlinearity(top.get("nonlinearity")),
        solver=solver,
        solve=_simple(SolveConfig, top.get("solve"), "solve", {
            "sweep_cutoff": _opt(_int), "initial_constant": _opt(_number), "morse_index": _bool}),
        spectrum=_simple(SpectrumConfig, top.get("spectrum"), "spectrum", {
            "count": _int, "lambda_max": _opt(_number)}),
        extend=_simple(ExtendConfig, top.get("extend"), "extend", {
            "input": _opt(_str), "cutoff": _int, "decay": _number, "y_max": _number,
            "y_count": _int, "y_conormal": _opt(_floats)}),
        gradcheck=_simple(GradcheckConfig, top.get("gradcheck"), "gradcheck", {
            "trials": _int, "step": _number, "cutoff": _int, "tolerance": _number}),
        verify=_simple(VerifyConfig, top.get("verify"), "verify", {"trials": _int, "cutoff": _int}),
        output_dir=output_dir or _str(top.get("output_dir", "fracperiod_out"), "output_dir"),
        seed=run_seed,
    )
    try:
        cfg.lattice()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"grid: {exc}") from None
    return cfg


def load_config(path=None, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return parse_config({}, seed, output_dir)
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, seed, output_dir)
