"""Critical points of the energy: direct minimization, Newton-Krylov, deflation.

The iteration runs on real grid samples scaled by sqrt(cell volume), so the
Euclidean inner product of state vectors equals the L^2 inner product of the
fields and the Hessian is a symmetric matrix in those coordinates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, minres

from .energy import DiscreteProblem, HypothesisReport, Nonlinearity, check_hypotheses
from .fractional import enumerate_spectrum, hs_norm, real_eigenbasis
from .torus import FourierField, ModeLattice, TorusConfig, coeffs_to_grid, grid_to_coeffs, l2_norm

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NonConvergence(SolverError):
    """Newton stopped without meeting the tolerance; carries the last iterate."""

    def __init__(self, message, last: FourierField | None = None, history=()):
        super().__init__(message)
        self.last = last
        self.history = list(history)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50
    linear_rtol: float = 1e-8
    linear_max_iter: int = 500
    deflation_power: float = 2.0
    deflation_shift: float = 1.0
    amplitudes: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    max_solutions: int = 64
    distinct_tol: float = 1e-4
    use_deflation: bool = True
    retries_per_seed: int = 3
    stall_iter: int = 12
    pad: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("tol", "linear_rtol", "distinct_tol", "deflation_shift"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.distinct_tol > self.tol:
            raise ValueError("distinct_tol must exceed the Newton tolerance")
        if self.max_iter < 1 or self.linear_max_iter < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class SolutionRecord:
    field: FourierField
    residual: float
    energy: float
    l2: float
    hs: float
    iterations: int
    init_tag: str
    paired: bool = False
    sign: int = 1
    morse_index: int | None = None
    residual_history: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "init": self.init_tag,
            "residual": self.residual,
            "energy": self.energy,
            "l2_norm": self.l2,
            "hs_norm": self.hs,
            "iterations": self.iterations,
            "paired": self.paired,
            "sign": self.sign,
            "morse_index": self.morse_index,
            "mean_value": float(np.real(self.field.coeffs.flat[0])) / math.sqrt(
                self.field.lattice.period**self.field.lattice.ndim),
        }

    def negated(self) -> "SolutionRecord":
        """The mirror solution -u; J is even, so energy and residual carry over."""
        return replace(self, field=-self.field, paired=True, sign=-self.sign,
                       residual_history=list(self.residual_history))


class StateSpace:
    """Maps between fields and scaled grid vectors for one discrete problem."""

    def __init__(self, cfg: TorusConfig, lattice: ModeLattice, nl: Nonlinearity, pad: int = 2):
        lattice = ModeLattice(lattice.half_extents, lattice.period)
        self.lattice = lattice
        self.problem = DiscreteProblem(cfg, lattice, nl, pad)
        self.cfg = cfg
        self.shape = lattice.grid_sizes
        self.size = math.prod(self.shape)
        self.scale = math.sqrt(lattice.cell_volume)
        diag = np.abs(self.problem.shifted)
        self.precond_diag = np.where(diag > 0, 1.0 / np.maximum(diag, 1e-300), 1.0)

    def to_state(self, u: FourierField) -> np.ndarray:
        return coeffs_to_grid(u.coeffs, self.lattice).ravel() * self.scale

    def to_coeffs(self, x: np.ndarray) -> np.ndarray:
        return grid_to_coeffs(x.reshape(self.shape) / self.scale, self.lattice)

    def to_field(self, x: np.ndarray) -> FourierField:
        return FourierField(self.lattice, self.to_coeffs(x))

    def _from_coeffs(self, c: np.ndarray) -> np.ndarray:
        return coeffs_to_grid(c, self.lattice).ravel() * self.scale

    def energy(self, x) -> float:
        return self.problem.energy(self.to_coeffs(x))

    def gradient(self, x) -> np.ndarray:
        return self._from_coeffs(self.problem.gradient(self.to_coeffs(x)))

    def hessian_operator(self, x) -> LinearOperator:
        c = self.to_coeffs(x)
        fp = self.problem.fprime(c)

        def mv(w):
            w = np.asarray(w).ravel()
            return self._from_coeffs(self.problem.hessian(c, self.to_coeffs(w), fprime=fp))

        return LinearOperator((self.size, self.size), matvec=mv, dtype=float)

    def preconditioner(self) -> LinearOperator:
        d = self.precond_diag

        def mv(w):
            return self._from_coeffs(d * self.to_coeffs(np.asarray(w).ravel()))

        return LinearOperator((self.size, self.size), matvec=mv, dtype=float)

    def record(self, x, iterations, tag, history=()) -> SolutionRecord:
        u = self.to_field(x)
        g = self.gradient(x)
        return SolutionRecord(u, float(np.linalg.norm(g)), self.energy(x), l2_norm(u),
                              hs_norm(u, self.cfg), iterations, tag, residual_history=list(history))


class Deflation:
    """Shifted power deflation M(u) = prod_i (||u - u_i||^{-p} + shift)."""

    def __init__(self, power: float = 2.0, shift: float = 1.0):
        self.power = power
        self.shift = shift
        self.roots: list[np.ndarray] = []

    def add(self, x: np.ndarray):
        self.roots.append(np.array(x, dtype=float))

    def factor(self, x) -> float:
        m = 1.0
        for r in self.roots:
            d = np.linalg.norm(x - r)
            m *= d ** (-self.power) + self.shift
        return m

    def grad_log(self, x) -> np.ndarray:
        g = np.zeros_like(x)
        for r in self.roots:
            diff = x - r
            d = np.linalg.norm(diff)
            dp = d ** (-self.power)
            g += (-self.power * dp / (d * d)) / (dp + self.shift) * diff
        return g


def _linear_solve(H, rhs, M, opts: SolverOptions):
    sol, info = minres(H, rhs, M=M, rtol=opts.linear_rtol, maxiter=opts.linear_max_iter)
    return sol, info


def newton_iterate(space: StateSpace, x0: np.ndarray, opts: SolverOptions,
                   deflation: Deflation | None = None, tag: str = "init") -> SolutionRecord:
    x = np.array(x0, dtype=float)
    M = space.preconditioner()
    history = []
    g = space.gradient(x)
    res = float(np.linalg.norm(g))
    history.append(res)
    for it in range(opts.max_iter + 1):
        if res <= opts.tol:
            if len(history) >= 3 and history[-2] > 0 and history[-3] > 0:
                log.debug("newton %s: converged in %d steps, last ratios %.3g %.3g", tag, it,
                          history[-1] / history[-2] ** 2, history[-2] / history[-3] ** 2)
            return space.record(x, it, tag, history)
        if it == opts.max_iter or not np.isfinite(res):
            break
        H = space.hessian_operator(x)
        step, info = _linear_solve(H, -g, M, opts)
        if not np.all(np.isfinite(step)):
            raise NonConvergence(f"linear solve broke down (info={info})", space.to_field(x), history)
        if deflation is not None and deflation.roots:
            denom = 1.0 - float(deflation.grad_log(x) @ step)
            if denom != 0.0:
                step = step / denom
        merit0 = res * (deflation.factor(x) if deflation is not None and deflation.roots else 1.0)
        alpha = 1.0
        for _ in range(12):
            trial = x + alpha * step
            gt = space.gradient(trial)
            rt = float(np.linalg.norm(gt))
            merit = rt * (deflation.factor(trial) if deflation is not None and deflation.roots else 1.0)
            if np.isfinite(merit) and merit < merit0:
                break
            alpha *= 0.5
        x, g, res = trial, gt, rt
        history.append(res)
        if (opts.stall_iter and len(history) > opts.stall_iter
                and min(history[-opts.stall_iter:]) > 0.5 * min(history[:-opts.stall_iter])):
            raise NonConvergence(f"residual stalled at {res:.3e} after {it + 1} iterations",
                                 space.to_field(x), history)
        log.debug("newton %s it %d: |g| = %.3e (alpha %.3g, minres info %d)", tag, it + 1, res, alpha, info)
    raise NonConvergence(f"no convergence after {opts.max_iter} iterations (|g| = {res:.3e})",
                         space.to_field(x), history)


def solve_newton(nl: Nonlinearity, cfg: TorusConfig, opts: SolverOptions, init: FourierField,
                 tag: str = "init") -> SolutionRecord:
    """Newton-Krylov on J'(u) = 0 starting at ``init``, on init's lattice."""
    space = StateSpace(cfg, init.lattice, nl, opts.pad)
    return newton_iterate(space, space.to_state(init), opts, tag=tag)


def solve_direct_min(nl: Nonlinearity, cfg: TorusConfig, opts: SolverOptions,
                     lattice: ModeLattice, init: FourierField | None = None,
                     report: HypothesisReport | None = None) -> SolutionRecord:
    """Preconditioned gradient descent with Armijo backtracking (lambda_inf < lambda_1 only)."""
    report = report or check_hypotheses(nl, cfg, lattice)
    if report.branch != "direct_minimization":
        raise SolverError(f"direct minimization needs lambda_inf < lambda_1 (branch: {report.branch})")
    space = StateSpace(cfg, lattice, nl, opts.pad)
    if init is None:
        rng = np.random.default_rng(opts.seed)
        init = FourierField.random(space.lattice, rng, decay=1.0, scale=0.1)
    x = space.to_state(init)
    P = space.preconditioner()
    E = space.energy(x)
    g = space.gradient(x)
    history = [float(np.linalg.norm(g))]
    max_iter = 100 * opts.max_iter
    handoff = max(math.sqrt(opts.tol), 1e-6)
    for it in range(max_iter):
        if history[-1] <= opts.tol:
            return space.record(x, it, "direct_min", history)
        # near the minimizer the Hessian is positive definite and Newton converges quadratically;
        # descent alone stalls once energy differences reach round-off
        if history[-1] <= handoff or (len(history) > 50 and history[-1] > 0.99 * history[-51]):
            break
        d = -P.matvec(g)
        slope = float(g @ d)
        alpha = 1.0
        for _ in range(40):
            trial = x + alpha * d
            Et = space.energy(trial)
            if Et <= E + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            # energy differences below round-off near the minimum: fall back to Newton
            break
        x, E = trial, Et
        g = space.gradient(x)
        history.append(float(np.linalg.norm(g)))
    rec = newton_iterate(space, x, opts, tag="direct_min")
    if rec.energy > 1e-12 * max(1.0, abs(rec.energy)):
        raise SolverError("descent ended above the energy of u = 0")
    rec.residual_history = history + rec.residual_history
    return rec


# ---------------------------------------------------------------------------

def seed_amplitude(cfg: TorusConfig, lam0: float, lam_j: float) -> float:
    """Amplitude (in eigenfunction coordinates) where a single mode balances.

    For a mode of eigenvalue lam_j the linear part (lam_j - lambda_inf) is offset
    by f(t)/t, which moves from lam0 near 0 to 0 at infinity; the pointwise
    size at which |f/t| ~ |lam0| / (1 + t^2) equals the gap is
    t^2 = |lam0| / (lambda_inf - lam_j) - 1, floored at 1.
    """
    gap = abs(cfg.lambda_inf - lam_j)
    t2 = abs(lam0) / gap - 1.0 if gap > 0 else 1.0
    return math.sqrt(cfg.volume) * math.sqrt(max(t2, 1.0))


@dataclass
class MultiplicityResult:
    records: list[SolutionRecord]
    pairs: int
    bound: int
    h: int | None
    k: int | None
    seeds: int  # eigenfunction x amplitude starts
    runs: int  # Newton runs, including deflated retries and polishing
    failed_runs: int
    report: HypothesisReport

    @property
    def representatives(self) -> list[SolutionRecord]:
        return [r for r in self.records if r.sign > 0]

    def energy_levels(self, tol: float = 1e-8) -> list[float]:
        levels = []
        for r in sorted(self.representatives, key=lambda r: r.energy):
            if not levels or abs(r.energy - levels[-1]) > tol * max(1.0, abs(r.energy)):
                levels.append(r.energy)
        return levels


def _distinct(x: np.ndarray, known: list[np.ndarray], tol: float, odd: bool) -> bool:
    for y in known:
        if np.linalg.norm(x - y) <= tol:
            return False
        if odd and np.linalg.norm(x + y) <= tol:
            return False
    return True


def solve_multiplicity(nl: Nonlinearity, cfg: TorusConfig, opts: SolverOptions,
                       lattice: ModeLattice, report: HypothesisReport | None = None,
                       sweep_lattice: ModeLattice | None = None) -> MultiplicityResult:
    """Deflated Newton sweep seeded by eigenfunctions of lambda_h .. lambda_k.

    Every seed is first run plainly; when that lands on a known (or the trivial)
    solution, or fails, it is re-run with the known solutions deflated.  Runs
    that do not converge are counted and skipped.

    With ``sweep_lattice`` the search runs on that (coarser) lattice and each
    distinct solution is then polished by plain Newton on ``lattice``.
    """
    report = report or check_hypotheses(nl, cfg, lattice)
    if not report.condition_holds or report.resonant:
        raise SolverError("multiplicity sweep requires the gap condition and non-resonance")
    if not nl.odd:
        raise SolverError("multiplicity sweep requires an odd nonlinearity")
    h, k = report.h, report.k
    space = StateSpace(cfg, sweep_lattice or lattice, nl, opts.pad)
    basis = real_eigenbasis(cfg, space.lattice, k)[h - 1:k]

    found: list[np.ndarray] = []
    records: list[SolutionRecord] = []
    tried = runs = failed = 0
    zero = np.zeros(space.size)

    def register(rec: SolutionRecord, x: np.ndarray) -> bool:
        if rec.l2 <= opts.distinct_tol or not _distinct(x, found, opts.distinct_tol, True):
            return False
        found.append(x)
        rec.paired = True
        records.append(rec)
        records.append(rec.negated())
        return True

    for ef in basis:
        direction = space.to_state(ef.field)
        base = seed_amplitude(cfg, nl.lambda0, ef.lam)
        for amp in opts.amplitudes:
            if len(found) >= opts.max_solutions:
                break
            x0 = amp * base * direction
            tag = f"lambda_{ef.index}:{ef.tag}:x{amp:g}"
            tried += 1
            attempts = [False] + ([True] * opts.retries_per_seed if opts.use_deflation else [])
            for deflate in attempts:
                defl = None
                if deflate:
                    defl = Deflation(opts.deflation_power, opts.deflation_shift)
                    defl.add(zero)
                    for y in found:
                        defl.add(y)
                        defl.add(-y)
                runs += 1
                try:
                    rec = newton_iterate(space, x0, opts, defl, tag + (":deflated" if deflate else ""))
                except NonConvergence as exc:
                    failed += 1
                    log.info("seed %s: %s", tag, exc)
                    if deflate:
                        break
                    continue
                x = space.to_state(rec.field)
                if not register(rec, x) and deflate:
                    break
    if sweep_lattice is not None and not sweep_lattice.same_modes(lattice):
        records, polish_runs, polish_failed = _polish(records, nl, cfg, opts, lattice)
        runs, failed = runs + polish_runs, failed + polish_failed
    pairs = sum(1 for r in records if r.sign > 0)
    return MultiplicityResult(records, pairs, report.pair_bound, h, k, tried, runs, failed, report)


def solve_existence(nl: Nonlinearity, cfg: TorusConfig, opts: SolverOptions,
                    lattice: ModeLattice, report: HypothesisReport | None = None,
                    sweep_lattice: ModeLattice | None = None) -> MultiplicityResult:
    """Plain Newton from eigenfunction seeds below (and just above) lambda_inf.

    For the non-resonant case without the gap condition or oddness: collects
    every distinct non-trivial solution reached, without deflation.
    """
    report = report or check_hypotheses(nl, cfg, lattice)
    if report.resonant:
        raise SolverError("lambda_inf is an eigenvalue; no existence statement applies")
    space = StateSpace(cfg, sweep_lattice or lattice, nl, opts.pad)
    table = enumerate_spectrum(cfg, space.lattice, lambda_max=cfg.lambda_inf)
    above = next(e for e in table.entries if e.lam > cfg.lambda_inf)
    basis = real_eigenbasis(cfg, space.lattice, above.index_range[1])
    found: list[np.ndarray] = []
    records: list[SolutionRecord] = []
    tried = failed = 0
    for ef in basis:
        direction = space.to_state(ef.field)
        base = seed_amplitude(cfg, nl.lambda0, ef.lam)
        for amp in opts.amplitudes:
            for sign in ((1.0,) if nl.odd else (1.0, -1.0)):
                tried += 1
                tag = f"lambda_{ef.index}:{ef.tag}:x{sign * amp:g}"
                try:
                    rec = newton_iterate(space, sign * amp * base * direction, opts, tag=tag)
                except NonConvergence as exc:
                    failed += 1
                    log.info("seed %s: %s", tag, exc)
                    continue
                x = space.to_state(rec.field)
                if rec.l2 <= opts.distinct_tol or not _distinct(x, found, opts.distinct_tol, nl.odd):
                    continue
                found.append(x)
                rec.paired = nl.odd
                records.append(rec)
                if nl.odd:
                    records.append(rec.negated())
    runs = tried
    if sweep_lattice is not None and not sweep_lattice.same_modes(lattice):
        records, polish_runs, polish_failed = _polish(records, nl, cfg, opts, lattice, odd=nl.odd)
        runs, failed = runs + polish_runs, failed + polish_failed
    pairs = sum(1 for r in records if r.sign > 0)
    return MultiplicityResult(records, pairs, report.pair_bound, report.h, report.k, tried, runs, failed,
                              report)


def _polish(records, nl, cfg, opts, lattice, odd=True):
    """Re-converge each representative on ``lattice``; returns (records, runs, failures)."""
    space = StateSpace(cfg, lattice, nl, opts.pad)
    kept: list[np.ndarray] = []
    out = []
    runs = failed = 0
    for rec in records:
        if rec.sign < 0:
            continue
        runs += 1
        try:
            fine = newton_iterate(space, space.to_state(rec.field.embed(space.lattice)), opts,
                                  tag=rec.init_tag + ":polished")
        except NonConvergence as exc:
            failed += 1
            log.info("polish of %s failed: %s", rec.init_tag, exc)
            continue
        x = space.to_state(fine.field)
        if fine.l2 <= opts.distinct_tol or not _distinct(x, kept, opts.distinct_tol, odd):
            continue
        kept.append(x)
        fine.paired = odd
        out.append(fine)
        if odd:
            out.append(fine.negated())
    return out, runs, failed


# ---------------------------------------------------------------------------

def independent_residual(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, factor: int = 2,
                         pad: int = 2) -> float:
    """|J'(u)|_{L^2} recomputed on a lattice refined by ``factor``."""
    fine = u.embed(u.lattice.refined(factor))
    prob = DiscreteProblem(cfg, fine.lattice, nl, pad)
    return float(np.sqrt(np.sum(np.abs(prob.gradient(fine.coeffs)) ** 2)))


def weak_form_defect(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, pad: int = 2) -> float:
    """max over lattice modes of |<J'(u), phi_k>| / |phi_k| for unit exponentials."""
    prob = DiscreteProblem(cfg, u.lattice, nl, pad)
    return float(np.max(np.abs(prob.gradient(u.coeffs))))


def hessian_extremes(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, pad: int = 2) -> tuple[float, float]:
    """Smallest and largest Hessian eigenvalues (Lanczos)."""
    space = StateSpace(cfg, u.lattice, nl, pad)
    H = space.hessian_operator(space.to_state(u))
    lo = eigsh(H, k=1, which="SA", return_eigenvectors=False, tol=1e-10)[0]
    hi = eigsh(H, k=1, which="LA", return_eigenvectors=False, tol=1e-10)[0]
    return float(lo), float(hi)


def morse_index(u: FourierField, nl: Nonlinearity, cfg: TorusConfig, pad: int = 2) -> int:
    """Number of negative Hessian eigenvalues.

    H >= kappa_s (mu^s - lambda_inf - max f_t), so only modes below that bound
    can be negative; that count (+1) Lanczos eigenvalues suffice.
    """
    space = StateSpace(cfg, u.lattice, nl, pad)
    x = space.to_state(u)
    fp = space.problem.fprime(u.coeffs)
    bound = int(np.sum(space.problem.mult - cfg.lambda_inf - float(np.max(fp)) < 0))
    if bound == 0:
        return 0
    kk = min(bound + 1, space.size - 1)
    H = space.hessian_operator(x)
    vals = eigsh(H, k=kk, which="SA", return_eigenvectors=False, tol=1e-10)
    return int(np.sum(vals < 0))


# ---------------------------------------------------------------------------

@dataclass
class PSRow:
    energy: float
    grad_norm: float
    hs_norm: float


@dataclass
class PSReport:
    rows: list[PSRow]
    suspect: bool
    reason: str

    def to_json(self) -> dict:
        return {"rows": [[r.energy, r.grad_norm, r.hs_norm] for r in self.rows],
                "ps_suspect": self.suspect, "reason": self.reason}


def ps_diagnostics(trajectory, nl: Nonlinearity, cfg: TorusConfig, norm_threshold: float = 1e3,
                   ratio_threshold: float = 1e-3, pad: int = 2) -> PSReport:
    """Table of (J, |J'|, |u|_{H^s}) along iterates, flagging unbounded near-critical growth.

    Away from resonance |J'(u)| / |u| stays bounded below for large u; a
    trajectory whose norm grows past ``norm_threshold`` while that ratio drops
    below ``ratio_threshold`` is flagged.
    """
    rows = []
    for u in trajectory:
        prob = DiscreteProblem(cfg, u.lattice, nl, pad)
        g = prob.gradient(u.coeffs)
        rows.append(PSRow(prob.energy(u.coeffs), float(np.sqrt(np.sum(np.abs(g) ** 2))), hs_norm(u, cfg)))
    if len(rows) < 2:
        return PSReport(rows, False, "too few iterates")
    norms = np.array([r.hs_norm for r in rows])
    ratios = np.array([r.grad_norm / r.hs_norm if r.hs_norm > 0 else np.inf for r in rows])
    growing = norms[-1] > norm_threshold and norms[-1] > norms[0]
    if growing and ratios[-1] < ratio_threshold:
        return PSReport(rows, True, f"|u| = {norms[-1]:.3g} with |J'|/|u| = {ratios[-1]:.3g}")
    return PSReport(rows, False, "bounded or gradient bounded away from zero")
