"""Damped Newton for the ladder systems, a monotone scheme for scalar equations,
and continuation along rays ``t q``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import BackgroundMetric, DifferentialField, Grid, background_metric
from .hitchin_system import (
    LadderSpec, LogMetricTuple, canonical, fuchsian_tuple, jacobian, raw_residual, rungs,
)

EPS = np.finfo(float).eps
FLOOR_FACTOR = 16.0


class SolverError(RuntimeError):
    """Non-convergence; carries the report and the last state."""

    def __init__(self, message, report=None, state=None):
        super().__init__(message)
        self.report = report
        self.state = state


class BracketError(SolverError):
    pass


@dataclass
class SolveConfig:
    tol: float | None = None  # None: 1e-10 radial, 1e-8 otherwise
    max_newton: int = 100
    damping: float = 0.5
    max_halvings: int = 30
    linear_tol: float = 1e-12
    linear_solver: str = "auto"  # auto | direct | cg
    max_sweeps: int = 20000

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if self.max_newton < 1 or self.max_halvings < 0:
            raise ValueError("iteration limits must be positive")
        if self.linear_solver not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")

    def tol_for(self, grid: Grid) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-10 if grid.kind == "radial-ball" else 1e-8


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    bracket_respected: bool | None = None
    monotone: bool | None = None
    wall_time: float = 0.0
    tol: float = 0.0
    floor: float = 0.0
    quadratic_ratios: list[float] = field(default_factory=list)
    linear_iterations: list[int] = field(default_factory=list)
    polish_steps: int = 0
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.inf

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "converged": self.converged,
            "bracket_respected": self.bracket_respected,
            "monotone": self.monotone,
            "wall_time": self.wall_time,
            "tol": self.tol,
            "floor": self.floor,
            "quadratic_ratios": list(self.quadratic_ratios),
            "polish_steps": self.polish_steps,
            "message": self.message,
        }


def apply_laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    """The complex Laplacian d_z d_zbar on the grid (zero on boundary rows)."""
    return grid.laplacian @ np.asarray(values, dtype=float)


def _use_cg(grid: Grid, config: SolveConfig) -> bool:
    if config.linear_solver == "auto":
        return grid.kind != "radial-ball"
    return config.linear_solver == "cg"


def _linear_solve(A: sp.csr_matrix, b: np.ndarray, grid: Grid, config: SolveConfig,
                  report: SolveReport | None = None) -> np.ndarray:
    """Solve A x = b where -A is symmetric positive definite on 2-D grids."""
    if _use_cg(grid, config):
        M = -A
        d = M.diagonal()
        pre = sp.diags(1.0 / d)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(M, -b, rtol=config.linear_tol, atol=0.0, M=pre,
                          maxiter=20 * b.size, callback=cb)
        if report is not None:
            report.linear_iterations.append(count[0])
        if info == 0:
            return x
        # fall through to a direct solve if CG stalls
    return spla.spsolve(A.tocsc(), b)


# --------------------------------------------------------------------------
# ladder Newton


def residual_floor(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec,
                   grid: Grid, metric: BackgroundMetric) -> float:
    """Round-off level of the g0-normalized residual at ``state``.

    Cancellation in the stencil and among the rungs leaves an error of
    roughly eps times the sum of magnitudes of the additive terms.
    """
    state = canonical(state, spec, metric)
    absL = abs(grid.laplacian)
    rg = rungs(state, q, spec, metric, grid)
    mag = sum(rg)
    worst = 0.0
    for k in range(spec.m):
        t = absL @ np.abs(state.dev[k]) + spec.alpha(k + 1) * np.abs(metric.curvature) + mag
        worst = max(worst, float(np.max((t / metric.g0)[grid.interior])))
    return FLOOR_FACTOR * EPS * worst


def _apply_bc(state: LogMetricTuple, bc: LogMetricTuple | None, grid: Grid) -> LogMetricTuple:
    out = state.copy()
    if bc is not None and grid.boundary.any():
        if bc.dev.shape != out.dev.shape:
            raise ValueError("boundary tuple does not match the state shape")
        out.dev[:, grid.boundary] = bc.w[:, grid.boundary] - out.ref[:, grid.boundary]
    return out


def _sup(r: np.ndarray, grid: Grid, metric: BackgroundMetric) -> float:
    return float(np.max(np.abs(r[:, grid.interior] / metric.g0[grid.interior])))


def newton_solve(spec: LadderSpec, q: DifferentialField, grid: Grid,
                 init: LogMetricTuple | None = None, bc: LogMetricTuple | None = None,
                 config: SolveConfig | None = None,
                 metric: BackgroundMetric | None = None) -> tuple[LogMetricTuple, SolveReport]:
    """Damped Newton with sup-norm backtracking.

    ``bc`` fixes w on the boundary mask (Fuchsian values when omitted).
    Convergence means the g0-normalized sup residual is below
    ``max(tol, floor)``, where ``floor`` is the round-off level at the iterate.
    """
    config = config or SolveConfig()
    metric = metric or background_metric(grid)
    tol = config.tol_for(grid)
    start = time.perf_counter()
    report = SolveReport(tol=tol)
    if init is None:
        init = fuchsian_tuple(spec, metric)
    if not np.all(np.isfinite(init.dev)):
        raise ValueError("initial state is not finite")
    if bc is None:
        bc = fuchsian_tuple(spec, metric)
    state = _apply_bc(canonical(init, spec, metric), bc, grid)
    sel = grid.interior
    m = spec.m

    r = raw_residual(state, q, spec, grid, metric)
    res = _sup(r, grid, metric)
    report.residual_history.append(res)
    for it in range(config.max_newton + 1):
        report.floor = residual_floor(state, q, spec, grid, metric)
        if res <= max(tol, report.floor):
            report.converged = True
            break
        if it == config.max_newton:
            break
        J = jacobian(state, q, spec, grid, metric)
        delta = _linear_solve(J, -r[:, sel].ravel(), grid, config, report).reshape(m, -1)
        step = 1.0
        for _ in range(config.max_halvings + 1):
            trial = state.copy()
            trial.dev[:, sel] += step * delta
            rt = raw_residual(trial, q, spec, grid, metric)
            rest = _sup(rt, grid, metric)
            if np.isfinite(rest) and rest < res:
                break
            step *= config.damping
        else:
            report.message = f"line search failed at iteration {it}"
            break
        if res > 0:
            report.quadratic_ratios.append(rest / res**2)
        state, r, res = trial, rt, rest
        report.residual_history.append(res)
        report.iterations = it + 1
    report.wall_time = time.perf_counter() - start
    if not report.converged:
        report.message = report.message or f"no convergence in {config.max_newton} iterations"
        raise SolverError(report.message, report, state)
    return state, report


# --------------------------------------------------------------------------
# scalar monotone scheme


def scalar_upper_root(b: float, c: float, G: float) -> float:
    """Smallest positive x with x^{c+1} - b x^c - G = 0 (x = b when G = 0)."""
    if G <= 0:
        return b
    lo, hi = b, G ** (1.0 / (c + 1.0)) + b
    f = lambda x: x ** (c + 1.0) - b * x**c - G
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 4 * EPS * hi:
            break
    return hi


def pointwise_root(b: float, c: float, f: np.ndarray) -> np.ndarray:
    """Solve e^x - f e^{-c x} - b = 0 nodewise (the equation without its Laplacian)."""
    f = np.asarray(f, dtype=float)
    lo = np.full(f.shape, b)
    hi = f ** (1.0 / (c + 1.0)) + b
    for _ in range(80):  # bisection on x^{c+1} - b x^c - f
        mid = 0.5 * (lo + hi)
        pos = mid ** (c + 1.0) - b * mid**c - f > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    out = np.log(hi)
    for _ in range(3):  # Newton polish in log variables
        N = np.exp(out) - f * np.exp(-c * out) - b
        dN = np.exp(out) + c * f * np.exp(-c * out)
        out = out - N / dN
    return np.maximum(out, math.log(b))


@dataclass
class ScalarProblem:
    """a Delta_{g} eta - e^eta + f e^{-c eta} + b = 0 on a grid with density g."""

    a: float
    c: float
    b: float
    f: np.ndarray

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ValueError("a, b, c must be positive")
        self.f = np.asarray(self.f, dtype=float)
        if np.any(self.f < 0) or not np.all(np.isfinite(self.f)):
            raise ValueError("f must be finite and non-negative")

    def bracket(self, grid: Grid) -> tuple[float, float]:
        G = float(np.max(self.f[grid.interior])) if grid.interior.any() else 0.0
        G = max(G, float(np.max(self.f)))
        return math.log(self.b), math.log(scalar_upper_root(self.b, self.c, G))

    def nonlinearity(self, eta: np.ndarray) -> np.ndarray:
        return np.exp(eta) - self.f * np.exp(-self.c * eta) - self.b

    def residual(self, eta: np.ndarray, grid: Grid, g: np.ndarray) -> np.ndarray:
        r = self.a * (grid.laplacian @ eta) / g - self.nonlinearity(eta)
        r[~grid.interior] = 0.0
        return r

    def floor(self, eta: np.ndarray, grid: Grid, g: np.ndarray) -> float:
        t = self.a * (abs(grid.laplacian) @ np.abs(eta)) / g + np.exp(eta) \
            + self.f * np.exp(-self.c * eta) + self.b
        return FLOOR_FACTOR * EPS * float(np.max(t[grid.interior]))


def monotone_solve_scalar(a: float, c: float, b: float, f: np.ndarray, grid: Grid,
                          config: SolveConfig | None = None, start: str = "sub",
                          bc: np.ndarray | None = None, g: np.ndarray | None = None,
                          polish: bool = True) -> tuple[np.ndarray, SolveReport]:
    """Monotone sub/supersolution iteration for the scalar equation.

    The iterates start from ``log b`` (``start='sub'``) or from the upper
    bracket (``'super'``) and stay inside ``[log b, log M]`` where M solves
    ``M^{c+1} - b M^c = max f``. Each sweep solves
    ``(a L - g Lambda) eta' = g (N(eta) - Lambda eta)`` with a pointwise shift
    ``Lambda >= N'`` between the current iterate and the bracket end, which
    preserves the ordering. Every sweep is checked against the bracket.

    When the sweeps slow down (large f makes the shift stiff) a damped Newton
    polish finishes the solve; its iterates are bracket-checked too.
    Dirichlet data ``bc`` default to the pointwise algebraic root.
    """
    config = config or SolveConfig()
    tol = config.tol_for(grid)
    g = background_metric(grid).g0 if g is None else np.asarray(g, dtype=float)
    prob = ScalarProblem(a, c, b, f)
    lo, hi = prob.bracket(grid)
    t0 = time.perf_counter()
    report = SolveReport(tol=tol, bracket_respected=True, monotone=True)
    if start not in ("sub", "super"):
        raise ValueError("start must be 'sub' or 'super'")

    eta = np.full(grid.size, lo if start == "sub" else hi)
    if grid.boundary.any():
        eta[grid.boundary] = pointwise_root(b, c, prob.f[grid.boundary]) if bc is None \
            else np.asarray(bc, dtype=float)[grid.boundary]
        if np.any(eta[grid.boundary] < lo - 1e-14) or np.any(eta[grid.boundary] > hi + 1e-14):
            raise BracketError("boundary data outside the analytic bracket", report)

    sel = grid.interior
    slack = 1e-12 * max(1.0, abs(hi))

    def sup_res(x):
        return float(np.max(np.abs(prob.residual(x, grid, g)[sel])))

    def inside(x):
        return x[sel].min() >= lo - slack and x[sel].max() <= hi + slack

    res = sup_res(eta)
    report.residual_history.append(res)
    aL = (a * grid.laplacian).tocsr()
    L_ib = aL[sel][:, ~sel]
    L_ii = aL[sel][:, sel]
    gi = g[sel]
    stalled = 0
    sweep = 0
    while sweep < config.max_sweeps:
        report.floor = prob.floor(eta, grid, g)
        if res <= max(tol, report.floor):
            report.converged = True
            break
        if polish and stalled >= 5:
            break
        sweep += 1
        if start == "sub":
            shift = math.exp(hi) + c * prob.f[sel] * np.exp(-c * eta[sel])
        else:
            shift = np.exp(eta[sel]) + c * prob.f[sel] * math.exp(-c * lo)
        A = (L_ii - sp.diags(gi * shift)).tocsc()
        rhs = gi * (prob.nonlinearity(eta)[sel] - shift * eta[sel]) - L_ib @ eta[~sel]
        new = eta.copy()
        new[sel] = spla.splu(A).solve(rhs)
        d = new[sel] - eta[sel]
        if (start == "sub" and d.min() < -10 * slack) or (start == "super" and d.max() > 10 * slack):
            report.monotone = False
        if not inside(new):
            report.bracket_respected = False
            report.iterations = sweep
            raise BracketError(f"iterate left the bracket at sweep {sweep}", report, new)
        eta = new
        prev, res = res, sup_res(eta)
        report.residual_history.append(res)
        stalled = stalled + 1 if res > 0.5 * prev else 0
        if np.max(np.abs(d)) == 0.0:
            break
    report.iterations = sweep

    if not report.converged and polish:
        for it in range(config.max_newton):
            report.floor = prob.floor(eta, grid, g)
            if res <= max(tol, report.floor):
                report.converged = True
                break
            dN = np.exp(eta[sel]) + c * prob.f[sel] * np.exp(-c * eta[sel])
            J = (L_ii - sp.diags(gi * dN)).tocsc()
            r = -gi * prob.residual(eta, grid, g)[sel]
            delta = spla.spsolve(J, r)
            step = 1.0
            for _ in range(config.max_halvings + 1):
                trial = eta.copy()
                trial[sel] += step * delta
                if inside(trial):
                    rt = sup_res(trial)
                    if rt < res:
                        break
                step *= config.damping
            else:
                break
            eta, res = trial, rt
            report.residual_history.append(res)
            report.polish_steps += 1
        else:
            report.floor = prob.floor(eta, grid, g)
            report.converged = res <= max(tol, report.floor)
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        report.message = f"scalar solve stalled after {report.iterations} sweeps " \
                         f"and {report.polish_steps} Newton steps"
        raise SolverError(report.message, report, eta)
    return eta, report


# --------------------------------------------------------------------------
# continuation


@dataclass
class ContinuationStep:
    t: float
    state: LogMetricTuple | None
    report: SolveReport | None
    ok: bool
    substeps: int = 0


def continuation(spec: LadderSpec, q: DifferentialField, grid: Grid,
                 t_schedule: Sequence[float], config: SolveConfig | None = None,
                 init: LogMetricTuple | None = None,
                 bc_fn: Callable[[float], LogMetricTuple | None] | None = None,
                 max_refine: int = 8) -> list[ContinuationStep]:
    """Solve along ``t q`` for increasing t, warm-starting each solve.

    A failed step is retried through geometric intermediate values of t, at
    most ``max_refine`` levels deep. After a persistent failure the sequence
    ends with a failure marker.
    """
    ts = [float(t) for t in t_schedule]
    if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_schedule must be positive and strictly increasing")
    config = config or SolveConfig()
    metric = background_metric(grid)
    state = init if init is not None else fuchsian_tuple(spec, metric)
    bc_fn = bc_fn or (lambda t: None)
    out: list[ContinuationStep] = []

    def attempt(t, s0):
        return newton_solve(spec, q.scaled(t * q.t), grid, s0, bc_fn(t), config, metric)

    def reach(t_prev, t, s0, depth):
        try:
            s, rep = attempt(t, s0)
            return s, rep, 0
        except SolverError:
            if depth >= max_refine:
                raise
            mid = math.sqrt(t_prev * t) if t_prev > 0 else 0.5 * t
            s_mid, _, n1 = reach(t_prev, mid, s0, depth + 1)
            s, rep, n2 = reach(mid, t, s_mid, depth + 1)
            return s, rep, n1 + n2 + 1

    t_prev = 0.0
    for t in ts:
        try:
            state, rep, nsub = reach(t_prev, t, state, 0)
        except SolverError as err:
            out.append(ContinuationStep(t, None, err.report, False))
            break
        out.append(ContinuationStep(t, state, rep, True, nsub))
        t_prev = t
    return out
