"""Derived geometry of solved ladders and the numerical verification suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .elliptic_solver import SolveConfig, continuation
from .geometry import BackgroundMetric, DifferentialField, Grid, background_metric, qnorm
from .hitchin_system import LadderSpec, LogMetricTuple, bk_lower_bounds, canonical, rungs
from .vortex import VortexSolution, VortexSpec, asymptote, check_mask, solve_vortex, \
    vortex_boundary_tuple

SLACK = 1e-8
RIGIDITY_TOL = 1e-12  # round-off level of lambda_f / (c_n g0) - 1


def fuchsian_pullback_constant(n: int) -> float:
    return (n**4 - n**2) / 6.0


def fuchsian_kgk(n: int) -> float:
    return -6.0 / (n**4 - n**2)


# --------------------------------------------------------------------------
# pullback metric and domination


def rung_multiplicities(spec: LadderSpec) -> np.ndarray:
    """How often each rung appears in tr(phi phi*): corner, rung_1..rung_m."""
    mult = np.full(spec.m + 1, 2.0)
    mult[0] = 1.0 if spec.case == "qn" else 2.0
    mult[spec.m] = 1.0 if spec.even else 2.0
    return mult


@dataclass
class PullbackMetric:
    density: np.ndarray
    rungs: list[np.ndarray]
    multiplicity: np.ndarray
    n: int

    def ratio(self, metric: BackgroundMetric) -> np.ndarray:
        return self.density / (fuchsian_pullback_constant(self.n) * metric.g0)


def pullback_metric(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec,
                    grid: Grid, metric: BackgroundMetric | None = None) -> PullbackMetric:
    metric = metric or background_metric(grid)
    rg = rungs(state, q, spec, metric, grid)
    mult = rung_multiplicities(spec)
    dens = 2 * spec.n * sum(mk * r for mk, r in zip(mult, rg))
    return PullbackMetric(dens, rg, mult, spec.n)


@dataclass
class DominationReport:
    min_ratio: float
    max_ratio: float
    bk_min_margin: float | None  # min over k, nodes of 2 b_k - (2km - k^2)
    bk_asserted: bool
    passed: bool


def domination_check(pm: PullbackMetric, metric: BackgroundMetric, grid: Grid,
                     spec: LadderSpec, q: DifferentialField | None = None,
                     slack: float = SLACK) -> DominationReport:
    ratio = pm.ratio(metric)[grid.interior]
    bk = np.stack([pm.rungs[k] / metric.g0 for k in range(1, spec.m + 1)])[:, grid.interior]
    margin = float(np.min(2 * bk - 2 * bk_lower_bounds(spec)[:, None]))
    asserted = spec.case == "qn" and spec.even
    ok = ratio.min() >= 1 - slack and (not asserted or margin >= -slack)
    if q is not None and not q.is_zero:
        ok = ok and ratio.max() - 1 > RIGIDITY_TOL  # rigidity, contrapositive form
    return DominationReport(float(ratio.min()), float(ratio.max()), margin, asserted, bool(ok))


# --------------------------------------------------------------------------
# inequality chains


@dataclass
class ChainReport:
    gaps: list[float]  # min over interior of consecutive chain differences / g0
    A: list[float]
    B: list[float]
    extra: dict = field(default_factory=dict)
    passed: bool = False
    skipped: str = ""

    @property
    def delta(self) -> float:
        return 1.0 - max(self.A) if self.A else float("nan")


def chain_check(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec, grid: Grid,
                metric: BackgroundMetric | None = None, slack: float = SLACK) -> ChainReport:
    metric = metric or background_metric(grid)
    if not metric.is_hyperbolic:
        return ChainReport([], [], [], skipped="degenerate flat model: rungs may coincide")
    sel = grid.interior
    rg = [r[sel] / metric.g0[sel] for r in rungs(state, q, spec, metric, grid)]
    m = spec.m
    nz = q.modulus_sq(grid.z[sel]) > 0
    # chain terms: left sides of each strict inequality, compared with the next rung
    if spec.case == "qn":
        left = [rg[0]] + rg[1:m]
    else:
        left = [rg[0], rg[0] + rg[1]] + rg[2:m]
    right = rg[1:m + 1]
    gaps = [float(np.min(r - l)) for l, r in zip(left, right)]
    A = []
    for k, (l, r) in enumerate(zip(left, right)):
        ratio = l / r
        if k == 0:
            ratio = ratio[nz]
        A.append(float(ratio.max()) if ratio.size else 0.0)
    if spec.case == "qn":
        B = [2 * (A[0] - 1)] + [(1 - 1 / A[k]) - (A[k - 1] - 1) if A[k] > 0 else -math.inf
                                for k in range(1, m)]
    else:
        B = [math.nan, A[1] - 1] + [(1 - 1 / A[k]) - (A[k - 1] - 1) for k in range(2, m)]
    extra: dict = {}
    ok = all(gp > 0 for gp in gaps) and all(a < 1 for a in A)
    if spec.case == "qn-1":
        h1 = np.exp(canonical(state, spec, metric).w[0][sel])
        qa = np.sqrt(q.modulus_sq(grid.z[sel]))
        marg = float(np.min(1 - h1[nz] * qa[nz])) if nz.any() else 1.0
        extra["h1_q_margin"] = marg
        extra["second_rung_gap"] = gaps[1] if len(gaps) > 1 else None
        ok = ok and marg > 0
    return ChainReport(gaps, A, B, extra, bool(ok))


# --------------------------------------------------------------------------
# Higgs field in a unitary frame


def higgs_unitary(n: int, sub: np.ndarray, corner: np.ndarray, case: str = "qn") -> np.ndarray:
    """Batched n x n matrices with |entries|^2 given by the rungs.

    ``sub`` has shape (..., n-1) holding the squared moduli of the
    subdiagonal; ``corner`` is h_1^2|q|^2 (q_n) or h_1 h_2 |q|^2 (q_{n-1}).
    """
    sub = np.asarray(sub, dtype=float)
    corner = np.asarray(corner, dtype=float)
    shape = sub.shape[:-1]
    phi = np.zeros(shape + (n, n), dtype=complex)
    idx = np.arange(n - 1)
    phi[..., idx + 1, idx] = np.sqrt(sub)
    if case == "qn":
        phi[..., 0, n - 1] = np.sqrt(corner)
    else:
        phi[..., 0, n - 2] = np.sqrt(corner)
        phi[..., 1, n - 1] = np.sqrt(corner)
    return phi


def subdiagonal_rungs(spec: LadderSpec, rg: Sequence[np.ndarray]) -> np.ndarray:
    """Squared moduli of the n-1 subdiagonal entries in the unitary frame."""
    m = spec.m
    half = list(rg[1:m + 1])
    seq = half + half[:m - 1][::-1] if spec.even else half + half[::-1]
    return np.stack(seq, axis=-1)


def higgs_field(state, q, spec, grid, metric=None) -> np.ndarray:
    metric = metric or background_metric(grid)
    rg = rungs(state, q, spec, metric, grid)
    return higgs_unitary(spec.n, subdiagonal_rungs(spec, rg), rg[0], spec.case)


def _killing_sq(X: np.ndarray, n: int) -> np.ndarray:
    return 2 * n * np.real(np.einsum("...ij,...ij->...", X, X.conj()))


def commutator_diag_matrix(phi: np.ndarray) -> np.ndarray:
    ph = np.conj(np.swapaxes(phi, -1, -2))
    C = phi @ ph - ph @ phi
    return np.real(np.diagonal(C, axis1=-2, axis2=-1))


def sectional_from_matrix(phi: np.ndarray, n: int | None = None,
                          degenerate_tol: float = 1e-20) -> tuple[np.ndarray, np.ndarray]:
    """K_{G/K} of the plane spanned by phi + phi^dag and i(phi - phi^dag).

    Returns (K, degenerate) where degenerate marks a vanishing commutator.
    """
    n = n or phi.shape[-1]
    ph = np.conj(np.swapaxes(phi, -1, -2))
    Y = phi + ph
    Z = 1j * (phi - ph)
    comm = Y @ Z - Z @ Y
    num = _killing_sq(comm, n)
    den = _killing_sq(Y, n) * _killing_sq(Z, n)
    degenerate = num <= degenerate_tol * den
    with np.errstate(invalid="ignore", divide="ignore"):
        K = np.where(den > 0, -num / np.where(den > 0, den, 1.0), 0.0)
    K = np.where(degenerate, 0.0, K)
    return K, degenerate


def commutator_diag(state, q, spec, grid, node: int | None = None, metric=None) -> np.ndarray:
    """Diagonal of [phi, phi^*] at one node (or all nodes with shape (N, n))."""
    d = commutator_diag_matrix(higgs_field(state, q, spec, grid, metric))
    return d if node is None else d[node]


def sectional_kgk(state, q, spec, grid, node: int | None = None, metric=None):
    K, deg = sectional_from_matrix(higgs_field(state, q, spec, grid, metric), spec.n)
    return (K, deg) if node is None else (float(K[node]), bool(deg[node]))


def n2_fuchsian_rig(g0: float = 1.0) -> tuple[float, float]:
    """K_{G/K} and min sqrt(-K) for the rank-2 Fuchsian Higgs field (rung g0/2)."""
    phi = higgs_unitary(2, np.array([g0 / 2.0]), np.array(0.0))
    K, _ = sectional_from_matrix(phi, 2)
    return float(K), math.sqrt(-float(K))


# --------------------------------------------------------------------------
# curvatures


def intrinsic_curvature(pm: PullbackMetric, grid: Grid, metric: BackgroundMetric | None = None,
                        route: str = "background") -> np.ndarray:
    """K = -Delta log(lambda_f) / lambda_f on interior nodes (NaN elsewhere).

    ``route='background'`` uses the analytic Delta log g0 for the g0 factor,
    so constant multiples of g0 give exactly -1/c; ``'direct'`` differences
    log lambda_f as a whole.
    """
    metric = metric or background_metric(grid)
    lam = pm.density
    if route == "background":
        lap = metric.curvature + grid.laplacian @ np.log(lam / metric.g0)
    elif route == "direct":
        lap = grid.laplacian @ np.log(lam)
    else:
        raise ValueError(f"unknown route {route!r}")
    K = -lap / lam
    K[~grid.interior] = np.nan
    return K


def gauss_check(K_gf: np.ndarray, K_gk: np.ndarray) -> np.ndarray:
    """2(K_{G/K} - K_{g_f}), the squared norm of the second fundamental form."""
    return 2.0 * (np.asarray(K_gk) - np.asarray(K_gf))


@dataclass
class ChernReport:
    values: list[tuple[float, float]]  # (min, max) of -Delta log H_i for i = 1..n
    verdicts: list[int]
    expected: list[int]

    @property
    def passed(self) -> bool:
        return self.verdicts == self.expected


def chern_sign(state: LogMetricTuple, spec: LadderSpec, grid: Grid,
               metric: BackgroundMetric | None = None) -> ChernReport:
    """Sign of -Delta log of each diagonal entry of the harmonic metric.

    Entry i has h_i for i <= m, 1 in the odd middle, and h_{n+1-i}^{-1} above.
    """
    metric = metric or background_metric(grid)
    state = canonical(state, spec, metric)
    sel = grid.interior
    n, m = spec.n, spec.m
    half = [(spec.alpha(k) * metric.curvature - grid.laplacian @ state.dev[k - 1])[sel] / metric.g0[sel]
            for k in range(1, m + 1)]
    fields = half + ([np.zeros(sel.sum())] if not spec.even else []) + [-x for x in half[::-1]]
    vals, verdicts = [], []
    for f in fields:
        lo, hi = float(f.min()), float(f.max())
        vals.append((lo, hi))
        verdicts.append(1 if lo > 0 else -1 if hi < 0 else 0 if lo == hi == 0 else 2)
    expected = [int(np.sign(n + 1 - 2 * i)) for i in range(1, n + 1)]
    return ChernReport(vals, verdicts, expected)


# --------------------------------------------------------------------------
# curvature suite


@dataclass
class CurvatureReport:
    K_gf: np.ndarray
    K_gk: np.ndarray
    diag: np.ndarray
    gauss_defect: np.ndarray
    chern: ChernReport
    entropy_bound: float
    degenerate: bool
    max_K_gf: float
    max_K_gk: float
    min_gauss: float
    min_abs_diag: float
    trace_defect: float
    antisymmetry_defect: float

    def passed(self, slack: float = SLACK) -> bool:
        return (not self.degenerate and self.max_K_gf < 0 and self.max_K_gk < 0
                and self.min_gauss >= -slack and self.chern.passed)


def curvature_report(state, q, spec, grid, metric=None, route="background") -> CurvatureReport:
    metric = metric or background_metric(grid)
    sel = grid.interior
    pm = pullback_metric(state, q, spec, grid, metric)
    K_gf = intrinsic_curvature(pm, grid, metric, route)
    phi = higgs_field(state, q, spec, grid, metric)
    K_gk, deg = sectional_from_matrix(phi, spec.n)
    diag = commutator_diag_matrix(phi) / metric.g0[:, None]
    gd = gauss_check(K_gf, K_gk)
    chern = chern_sign(state, spec, grid, metric)
    scale = np.abs(diag[sel]).max()
    return CurvatureReport(
        K_gf, K_gk, diag, gd, chern,
        entropy_bound=float(np.sqrt(-np.max(K_gf[sel]))) if np.max(K_gf[sel]) < 0 else 0.0,
        degenerate=bool(deg[sel].any()),
        max_K_gf=float(np.max(K_gf[sel])), max_K_gk=float(np.max(K_gk[sel])),
        min_gauss=float(np.min(gd[sel])),
        min_abs_diag=float(np.min(np.max(np.abs(diag[sel]), axis=1))),
        trace_defect=float(np.max(np.abs(diag[sel].sum(axis=1))) / scale) if scale else 0.0,
        antisymmetry_defect=float(np.max(np.abs(diag[sel] + diag[sel][:, ::-1])) / scale)
        if scale else 0.0,
    )


def entropy_bound(K_gf: np.ndarray, grid: Grid) -> float:
    """min sqrt(-K_{g_f}) over interior nodes (0 if K is not negative)."""
    kmax = float(np.nanmax(K_gf[grid.interior]))
    return math.sqrt(-kmax) if kmax < 0 else 0.0


# --------------------------------------------------------------------------
# vortex comparison and rays


@dataclass
class ComparisonReport:
    min_diff: dict[int, float]  # min(u_k - h_k)
    min_log_gap: dict[int, float]  # min(log u_k - log h_k)
    h1_q_margin: float | None
    passed: bool


def vortex_family(spec: LadderSpec) -> list[int]:
    return list(range(1 if spec.case == "qn" else 2, spec.m + 1))


def compare_vortex(state: LogMetricTuple, solutions: dict[int, VortexSolution], q: DifferentialField,
                   spec: LadderSpec, grid: Grid, metric: BackgroundMetric | None = None,
                   slack: float = 0.0) -> ComparisonReport:
    metric = metric or background_metric(grid)
    state = canonical(state, spec, metric)
    sel = grid.interior
    diffs, gaps = {}, {}
    for k in vortex_family(spec):
        sol = solutions[k]
        logu = np.log(sol.u[sel])
        logh = state.w[k - 1][sel]
        diffs[k] = float(np.min(sol.u[sel] - np.exp(logh)))
        gaps[k] = float(np.min(logu - logh))
    ok = all(g > -slack for g in gaps.values())
    marg = None
    if spec.case == "qn-1":
        nz = q.modulus_sq(grid.z[sel]) > 0
        h1 = np.exp(state.w[0][sel])
        marg = float(np.min(1 - h1[nz] * np.sqrt(q.modulus_sq(grid.z[sel][nz])))) if nz.any() else 1.0
        ok = ok and marg > 0
    return ComparisonReport(diffs, gaps, marg, bool(ok))


def fit_loglog(t: Sequence[float], err: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and intercept of log err against log t."""
    x, y = np.log(np.asarray(t, float)), np.log(np.asarray(err, float))
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(icpt)


@dataclass
class RayStudy:
    t: list[float]
    ok: list[bool]
    errors: dict[int, list[float]]  # sup |h_k |tq|^{2 alpha/d} - 1| over the mask
    vortex_gap: dict[int, list[float]]  # sup (1 - h_k/u_k)
    upper_h_u: dict[int, list[float]]  # min (u_k - h_k)/u_k, > 0 required
    upper_u_asym: dict[int, list[float]]  # min (1 - u_k |tq|^{2 alpha/d}), > 0 required
    qnorms: list[float]
    slope: dict[int, float | None]
    C: dict[int, float | None]
    target_slope: float
    warnings: list[str] = field(default_factory=list)

    def slope_ok(self, rel: float = 0.25) -> bool:
        return all(s is not None and abs(s - self.target_slope) <= rel * abs(self.target_slope)
                   for s in self.slope.values())

    def monotone(self) -> bool:
        return all(all(b < a for a, b in zip(e, e[1:])) for e in self.errors.values())

    def upper_ok(self) -> bool:
        vals = [v for d in (self.upper_h_u, self.upper_u_asym) for seq in d.values() for v in seq]
        return bool(vals) and min(vals) > 0


def ray_study(spec: LadderSpec, q: DifferentialField, grid: Grid, t_schedule: Sequence[float],
              mask: np.ndarray, config: SolveConfig | None = None, bc: str = "fuchsian") -> RayStudy:
    """Errors of h_k^t against |tq|^{-(n+1-2k)/d} and against u_k^t along a ray."""
    check_mask(mask, q, grid)
    metric = background_metric(grid)
    ks = vortex_family(spec)
    bc_fn = (lambda t: vortex_boundary_tuple(spec, q.scaled(t * q.t), grid, metric)) \
        if bc == "vortex" else None
    steps = continuation(spec, q, grid, t_schedule, config, bc_fn=bc_fn)
    d = spec.q_degree
    study = RayStudy([], [], {k: [] for k in ks}, {k: [] for k in ks}, {k: [] for k in ks},
                     {k: [] for k in ks}, [], {}, {}, -2.0 / d)
    for st in steps:
        study.t.append(st.t)
        study.ok.append(st.ok)
        qt = q.scaled(st.t * q.t)
        study.qnorms.append(qnorm(qt, grid))
        if not st.ok:
            study.warnings.append(f"solve failed at t = {st.t}")
            continue
        w = canonical(st.state, spec, metric).w
        for k in ks:
            vs = VortexSpec(spec.case, spec.n, k)
            sol = solve_vortex(vs, qt, grid, config)
            asy = asymptote(vs, qt, grid)[mask]
            h = np.exp(w[k - 1][mask])
            u = sol.u[mask]
            study.errors[k].append(float(np.max(np.abs(h / asy - 1.0))))
            study.vortex_gap[k].append(float(np.max(1.0 - h / u)))
            study.upper_h_u[k].append(float(np.min((u - h) / u)))
            study.upper_u_asym[k].append(float(np.min(1.0 - u / asy)))
    good = [i for i, ok in enumerate(study.ok) if ok]
    for k in ks:
        if len(good) >= 4:
            ts = [study.t[i] for i in good]
            study.slope[k] = fit_loglog(ts, study.errors[k])[0]
            study.C[k] = float(max(e * study.qnorms[i] for e, i in zip(study.errors[k], good)))
        else:
            study.slope[k] = None
            study.C[k] = None
    if len(good) < 4:
        study.warnings.append("fewer than 4 successful t values: no exponent fit")
    return study


# --------------------------------------------------------------------------
# verification suite

ALL_CHECKS = (
    "residual", "domination", "bk_bounds", "chain", "curvature_gf", "curvature_gk",
    "commutator", "gauss", "chern", "comparison", "vortex_brackets", "sigma_identity",
    "entropy",
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float | None
    details: dict = field(default_factory=dict)
    skipped: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": self.margin,
                "skipped": self.skipped, "details": self.details}


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    grid: dict
    solver: dict
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks],
                "grid": self.grid, "solver": self.solver, "flags": self.flags}


def grid_metadata(grid: Grid) -> dict:
    d = grid.domain
    return {"kind": d.kind, "resolution": d.resolution, "radius": d.radius,
            "periods": list(d.periods), "nodes": int(grid.size),
            "interior": int(grid.interior.sum()), "spacing": float(grid.h)}


def sigma_refinement(spec: VortexSpec, q: DifferentialField, grid: Grid,
                     config: SolveConfig | None = None) -> tuple[float, float, float]:
    """Identity residual on ``grid`` and on the grid with doubled spacing, and their ratio."""
    from dataclasses import replace as _replace

    from .geometry import build_grid
    from .vortex import sigma_curvature_check

    d = grid.domain
    coarse = build_grid(_replace(d, resolution=(d.resolution - 1) // 2 + 1))
    fine_sol = solve_vortex(spec, q, grid, config)
    coarse_sol = solve_vortex(spec, q, coarse, config)
    rf = sigma_curvature_check(fine_sol, q, grid)
    rc = sigma_curvature_check(coarse_sol, q, coarse)
    return rf, rc, rc / rf if rf > 0 else math.inf


def verify(spec: LadderSpec, q: DifferentialField, grid: Grid, state: LogMetricTuple,
           solver_report: dict | None = None, checks: Sequence[str] | None = None,
           config: SolveConfig | None = None, invert: Sequence[str] = (),
           slack: float = SLACK) -> VerificationReport:
    """Run the enabled checks on a solved state.

    Names in ``invert`` have their verdict flipped; this exists to exercise
    the failure path of callers.
    """
    from .hitchin_system import residual as ladder_residual

    checks = list(ALL_CHECKS if checks is None else checks)
    unknown = set(checks) - set(ALL_CHECKS)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    metric = background_metric(grid)
    hyper = metric.is_hyperbolic
    sel = grid.interior
    flags = []
    pm = pullback_metric(state, q, spec, grid, metric)
    if not hyper:
        rg = np.stack([r[sel] for r in pm.rungs])
        if np.ptp(rg) <= 1e-10 * np.max(np.abs(rg)):
            flags.append("degenerate flat model")
        else:
            flags.append("flat model")
    cr = curvature_report(state, q, spec, grid, metric) if hyper else None
    vortex_sols: dict[int, VortexSolution] = {}

    def vortices():
        if not vortex_sols:
            for k in vortex_family(spec):
                vortex_sols[k] = solve_vortex(VortexSpec(spec.case, spec.n, k), q, grid, config)
        return vortex_sols

    out: list[CheckResult] = []
    skip = "not applicable on the flat torus"
    for name in checks:
        if name == "residual":
            r = ladder_residual(state, q, spec, grid, metric).sup
            tol = (config or SolveConfig()).tol_for(grid)
            fl = (solver_report or {}).get("floor", 0.0)
            res = CheckResult(name, r <= max(tol, fl), r, {"tol": tol, "floor": fl})
        elif not hyper and name != "entropy":
            res = CheckResult(name, True, None, skipped=skip)
        elif name == "domination":
            dom = domination_check(pm, metric, grid, spec, q, slack)
            rig = (dom.max_ratio - 1 > RIGIDITY_TOL) if not q.is_zero else True
            res = CheckResult(name, dom.min_ratio >= 1 - slack and rig, dom.min_ratio - 1,
                              {"min_ratio": dom.min_ratio, "max_ratio": dom.max_ratio,
                               "rigidity_margin": dom.max_ratio - 1})
        elif name == "bk_bounds":
            dom = domination_check(pm, metric, grid, spec, q, slack)
            ok = dom.bk_min_margin >= -slack if dom.bk_asserted else True
            res = CheckResult(name, ok, dom.bk_min_margin,
                              {"asserted": dom.bk_asserted,
                               "note": "" if dom.bk_asserted else "informational for this case"})
        elif name == "chain":
            ch = chain_check(state, q, spec, grid, metric, slack)
            res = CheckResult(name, ch.passed, min(ch.gaps),
                              {"gaps": ch.gaps, "A": ch.A, "B": ch.B, "delta": ch.delta, **ch.extra})
        elif name == "curvature_gf":
            res = CheckResult(name, cr.max_K_gf < 0, -cr.max_K_gf, {"max_K_gf": cr.max_K_gf})
        elif name == "curvature_gk":
            res = CheckResult(name, cr.max_K_gk < 0 and not cr.degenerate, -cr.max_K_gk,
                              {"max_K_gk": cr.max_K_gk, "degenerate": cr.degenerate})
        elif name == "commutator":
            ok = cr.trace_defect < 1e-12 and cr.antisymmetry_defect < 1e-12 and cr.min_abs_diag > 0
            res = CheckResult(name, ok, cr.min_abs_diag,
                              {"trace_defect": cr.trace_defect,
                               "antisymmetry_defect": cr.antisymmetry_defect,
                               "d1_max": float(np.max(cr.diag[sel, 0]))})
            if spec.case == "qn":
                res.passed = res.passed and res.details["d1_max"] < 0
        elif name == "gauss":
            res = CheckResult(name, cr.min_gauss >= -slack, cr.min_gauss)
        elif name == "chern":
            res = CheckResult(name, cr.chern.passed, min(abs(v) for lo, hi in cr.chern.values
                                                          for v in (lo, hi) if v != 0),
                              {"verdicts": cr.chern.verdicts, "expected": cr.chern.expected})
        elif name == "comparison":
            if q.is_zero:
                res = CheckResult(name, True, None, skipped="q = 0")
            else:
                cmp = compare_vortex(state, vortices(), q, spec, grid, metric)
                res = CheckResult(name, cmp.passed, min(cmp.min_log_gap.values()),
                                  {"min_diff": {str(k): v for k, v in cmp.min_diff.items()},
                                   "min_log_gap": {str(k): v for k, v in cmp.min_log_gap.items()},
                                   "h1_q_margin": cmp.h1_q_margin})
        elif name == "vortex_brackets":
            margins = {}
            ok = True
            for k, sol in vortices().items():
                lo_m, up_m = sol.bracket_margins(grid)
                margins[str(k)] = [lo_m, up_m]
                ok = ok and lo_m >= -slack and up_m > 0 and bool(sol.report.bracket_respected)
            res = CheckResult(name, ok, min(min(v) for v in margins.values()), {"margins": margins})
        elif name == "sigma_identity":
            # second-order decay of the identity residual under halving of the spacing
            vals, ratios = {}, {}
            for k in vortex_family(spec):
                rf, rc, ratio = sigma_refinement(VortexSpec(spec.case, spec.n, k), q, grid, config)
                vals[str(k)], ratios[str(k)] = rf, ratio
            ok = all(3.0 <= r <= 5.0 for r in ratios.values())
            res = CheckResult(name, ok, min(ratios.values()),
                              {"sup_residual": vals, "refinement_ratio": ratios})
        elif name == "entropy":
            if hyper:
                eb = cr.entropy_bound
                res = CheckResult(name, eb > 0, eb, {"min_sqrt_neg_K": eb})
            else:
                res = CheckResult(name, True, None, skipped=skip)
        if name in invert:
            res.passed = not res.passed
            res.details["inverted"] = True
        out.append(res)
    return VerificationReport(out, grid_metadata(grid), solver_report or {}, flags)
