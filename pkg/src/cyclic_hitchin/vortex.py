"""Decoupled vortex equations.

For the q_n ladder the k-th equation is

    Delta log u + u^{-1/alpha} - (u^2 |q|^2)^{1/(2k-1)} = 0,   alpha = (n+1-2k)/2,

and the q_{n-1} ladder uses |2q|^2 with exponent 1/(2k-2), k >= 2. Writing
``sigma = u^{-1/alpha} = g0 e^eta`` turns each into the scalar problem handled
by :func:`elliptic_solver.monotone_solve_scalar`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic_solver import SolveConfig, SolveReport, monotone_solve_scalar, pointwise_root, \
    scalar_upper_root
from .geometry import BackgroundMetric, DifferentialField, DomainError, Grid, background_metric
from .hitchin_system import CASES, LadderSpec, LogMetricTuple, SpecError, fuchsian_tuple


@dataclass(frozen=True)
class VortexSpec:
    case: str
    n: int
    k: int

    def __post_init__(self):
        if self.case not in CASES:
            raise SpecError(f"unknown case {self.case!r}")
        LadderSpec(self.case, self.n)  # validates n
        m = self.n // 2
        kmin = 1 if self.case == "qn" else 2
        if self.case == "qn-1" and self.k == 1:
            raise SpecError("the q_{n-1} vortex family starts at k = 2 (no v_1 equation)")
        if not kmin <= self.k <= m:
            raise SpecError(f"k must lie in [{kmin}, {m}] for n = {self.n}")

    @property
    def alpha(self) -> float:
        return 0.5 * (self.n + 1 - 2 * self.k)

    @property
    def exponent(self) -> int:
        """Denominator e in (u^2|q|^2)^{1/e}."""
        return 2 * self.k - 1 if self.case == "qn" else 2 * self.k - 2

    @property
    def q_degree(self) -> int:
        return self.n if self.case == "qn" else self.n - 1

    @property
    def q_factor(self) -> float:
        """|q|^2 multiplier: 1, or 4 for |2 q_{n-1}|^2."""
        return 1.0 if self.case == "qn" else 4.0

    @property
    def c(self) -> float:
        return 2.0 * self.alpha / self.exponent

    @property
    def label(self) -> str:
        if self.case == "qn" and self.n == 3 and self.k == 1:
            return "Wang equation"
        return f"vortex {self.case} n={self.n} k={self.k}"


@dataclass
class VortexSolution:
    spec: VortexSpec
    u: np.ndarray
    eta: np.ndarray
    lower: np.ndarray  # bracket on u^{-1}
    upper: np.ndarray
    report: SolveReport
    t: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def u_inv(self) -> np.ndarray:
        return 1.0 / self.u

    def bracket_margins(self, grid: Grid) -> tuple[float, float]:
        """min(u^{-1}/lower - 1) and min(1 - u^{-1}/upper) over all nodes."""
        ui = self.u_inv
        return float(np.min(ui / self.lower - 1.0)), float(np.min(1.0 - ui / self.upper))


def _check(spec: VortexSpec, q: DifferentialField):
    if q.degree != spec.q_degree:
        raise SpecError(f"{spec.case} vortex with n={spec.n} needs a degree-{spec.q_degree} differential")


def forcing(spec: VortexSpec, q: DifferentialField, grid: Grid,
            metric: BackgroundMetric) -> np.ndarray:
    """f = (s |q|^2_g)^{1/e}, the coefficient of e^{-c eta}."""
    _check(spec, q)
    qg = spec.q_factor * q.modulus_sq(grid.z) / metric.g0 ** q.degree
    return qg ** (1.0 / spec.exponent)


def analytic_bracket(spec: VortexSpec, q: DifferentialField, grid: Grid,
                     metric: BackgroundMetric | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounds on u^{-1} from the comparison principle.

    lower = max(|s q|^{2 alpha/d}, (alpha g0)^alpha);
    upper = ((max |s q|_g^{2/d} + alpha) g0)^alpha with the max over the grid.
    """
    metric = metric or background_metric(grid)
    a, d = spec.alpha, spec.q_degree
    sq = spec.q_factor * q.modulus_sq(grid.z)
    lower = np.maximum(sq ** (a / d), (a * metric.g0) ** a)
    G = float(np.max(sq / metric.g0**d)) ** (1.0 / d)
    upper = ((G + a) * metric.g0) ** a
    return lower, upper


def u_from_eta(spec: VortexSpec, eta: np.ndarray, metric: BackgroundMetric) -> np.ndarray:
    return np.exp(-spec.alpha * (np.log(metric.g0) + eta))


def eta_from_u(spec: VortexSpec, u: np.ndarray, metric: BackgroundMetric) -> np.ndarray:
    return -np.log(u) / spec.alpha - np.log(metric.g0)


def vortex_residual(u: np.ndarray, q: DifferentialField, spec: VortexSpec, grid: Grid,
                    metric: BackgroundMetric | None = None) -> np.ndarray:
    """g0-normalized residual of the u-equation; zero off the interior.

    Delta log u is split as -alpha (Delta log g0 + Delta eta) with the analytic
    Delta log g0, matching the discretization used by :func:`solve_vortex`.
    """
    metric = metric or background_metric(grid)
    _check(spec, q)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("u must be positive")
    a = spec.alpha
    eta = eta_from_u(spec, u, metric)
    lap_log_u = -a * (metric.curvature + grid.laplacian @ eta)
    uq = (u**2 * spec.q_factor * q.modulus_sq(grid.z)) ** (1.0 / spec.exponent)
    r = (lap_log_u + u ** (-1.0 / a) - uq) / metric.g0
    r[~grid.interior] = 0.0
    return r


def solve_vortex(spec: VortexSpec, q: DifferentialField, grid: Grid,
                 config: SolveConfig | None = None, start: str = "sub") -> VortexSolution:
    """Solve one vortex equation on a hyperbolic ball by the monotone scheme.

    Dirichlet data on the ball boundary are the pointwise roots of the
    algebraic part, which lie inside the analytic bracket.
    """
    if not grid.domain.is_hyperbolic:
        raise DomainError("vortex solves need a hyperbolic domain (b = alpha g0 vanishes on the torus)")
    metric = background_metric(grid)
    f = forcing(spec, q, grid, metric)
    a = spec.alpha
    eta, report = monotone_solve_scalar(a, spec.c, a, f, grid, config, start=start, g=metric.g0)
    lower, upper = analytic_bracket(spec, q, grid, metric)
    u = u_from_eta(spec, eta, metric)
    sol = VortexSolution(spec, u, eta, lower, upper, report, q.t)
    sol.meta["label"] = spec.label
    sol.meta["eta_bracket"] = (math.log(a), math.log(scalar_upper_root(a, spec.c, float(f.max()))))
    return sol


def sigma_curvature_check(solution: VortexSolution, q: DifferentialField, grid: Grid,
                          metric: BackgroundMetric | None = None) -> float:
    """Sup over interior nodes of |alpha K_sigma + 1 - |q|_sigma^{2/e}|.

    K_sigma = -Delta_h log sigma / sigma with the full discrete Laplacian of
    log sigma, so the value measures the discretization error of the solve.
    """
    metric = metric or background_metric(grid)
    spec = solution.spec
    return float(np.max(np.abs(sigma_identity_residual(solution.u, q, spec, grid))[grid.interior]))


def sigma_identity_residual(u: np.ndarray, q: DifferentialField, spec: VortexSpec,
                            grid: Grid) -> np.ndarray:
    a = spec.alpha
    log_sigma = -np.log(u) / a
    sigma = np.exp(log_sigma)
    K = -(grid.laplacian @ log_sigma) / sigma
    qs = (spec.q_factor * q.modulus_sq(grid.z) / sigma**spec.q_degree) ** (1.0 / spec.exponent)
    r = a * K + 1.0 - qs
    r[~grid.interior] = 0.0
    return r


def asymptote(spec: VortexSpec | LadderSpec, q: DifferentialField, grid: Grid,
              k: int | None = None) -> np.ndarray:
    """|s q|^{-(n+1-2k)/d}, the large-t profile of u_k (and h_k)."""
    if isinstance(spec, LadderSpec):
        spec = VortexSpec(spec.case, spec.n, k)
    sq = spec.q_factor * q.modulus_sq(grid.z)
    with np.errstate(divide="ignore"):
        return sq ** (-spec.alpha / spec.q_degree)


def check_mask(mask: np.ndarray, q: DifferentialField, grid: Grid, clearance: float = 3.0):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    if np.any(mask & ~grid.interior):
        raise ValueError("mask must select interior nodes")
    if q.is_zero or np.any(q.distance_to_zeros(grid.z[mask]) <= clearance * grid.h):
        raise ValueError(f"mask comes within {clearance} spacings of a zero of q")


@dataclass
class VortexRay:
    spec: VortexSpec
    t: list[float]
    errors: list[float]  # sup |u |tq|^{2 alpha/d} - 1| over the mask
    upper_margin: list[float]  # min (1 - u/asymptote) over the mask, > 0 required
    solutions: list[VortexSolution]

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def vortex_ray(spec: VortexSpec, q: DifferentialField, grid: Grid, t_schedule,
               mask: np.ndarray, config: SolveConfig | None = None) -> VortexRay:
    check_mask(mask, q, grid)
    ts, errs, ups, sols = [], [], [], []
    for t in t_schedule:
        qt = q.scaled(float(t) * q.t)
        sol = solve_vortex(spec, qt, grid, config)
        asy = asymptote(spec, qt, grid)[mask]
        ratio = sol.u[mask] / asy
        ts.append(float(t))
        errs.append(float(np.max(np.abs(ratio - 1.0))))
        ups.append(float(np.min(1.0 - ratio)))
        sols.append(sol)
    return VortexRay(spec, ts, errs, ups, sols)


def vortex_boundary_tuple(spec: LadderSpec, q: DifferentialField, grid: Grid,
                          metric: BackgroundMetric | None = None) -> LogMetricTuple:
    """Boundary data w_k = log u_k from the pointwise vortex roots.

    k = 1 of the q_{n-1} ladder has no vortex equation and keeps its Fuchsian
    value. Only the boundary entries matter to the Newton solver.
    """
    metric = metric or background_metric(grid)
    base = fuchsian_tuple(spec, metric)
    w = base.w.copy()
    for k in range(1, spec.m + 1):
        if spec.case == "qn-1" and k == 1:
            continue
        vs = VortexSpec(spec.case, spec.n, k)
        f = forcing(vs, q, grid, metric)
        eta = pointwise_root(vs.alpha, vs.c, f)
        w[k - 1] = np.log(u_from_eta(vs, eta, metric))
    return LogMetricTuple.from_w(w, base.ref)
