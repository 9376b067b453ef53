"""Residuals, Jacobians and closed forms for the cyclic ladder systems.

Unknowns are ``w_k = log h_k`` for k = 1..m. Internally every state is stored
as the Fuchsian reference plus a deviation, ``w = ref + dev``. The Laplacian of
the reference is taken analytically (``Delta log g0 = g0``), so only the
deviation is differenced. This makes the Fuchsian state an exact discrete
solution and keeps round-off in the Laplacian proportional to ``|dev|``.

Rungs are numbered as in the pullback metric: ``rung[0]`` is the corner term
(h_1^2|q|^2 or h_1 h_2|q|^2), ``rung[k] = h_k^{-1} h_{k+1}`` for k < m and
``rung[m]`` is h_m^{-2} (even n) or h_m^{-1} (odd n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import BackgroundMetric, DifferentialField, Grid, background_metric

CASES = ("qn", "qn-1")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LadderSpec:
    case: str
    n: int

    def __post_init__(self):
        if self.case not in CASES:
            raise SpecError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.case == "qn" and self.n < 3:
            raise SpecError(
                "q_n case needs n >= 3: n = 2 makes q_n the Hopf differential q_2, "
                "which is excluded (the harmonic map is then not conformal)")
        if self.case == "qn-1" and self.n < 4:
            raise SpecError(
                "q_{n-1} case needs n >= 4: n = 3 makes q_{n-1} the Hopf differential q_2, "
                "which is excluded (the harmonic map is then not conformal)")

    @property
    def m(self) -> int:
        return self.n // 2

    @property
    def parity(self) -> str:
        return "even" if self.n % 2 == 0 else "odd"

    @property
    def even(self) -> bool:
        return self.n % 2 == 0

    @property
    def q_degree(self) -> int:
        return self.n if self.case == "qn" else self.n - 1

    def alpha(self, k: int) -> float:
        return 0.5 * (self.n + 1 - 2 * k)


def fuchsian_rung_constants(n: int) -> np.ndarray:
    """rung_k / g0 at the Fuchsian point, k = 1..m (entry 0 is the corner, 0)."""
    m = n // 2
    out = np.zeros(m + 1)
    for k in range(1, m):
        out[k] = 0.5 * k * (n - k)
    out[m] = n * n / 8.0 if n % 2 == 0 else (n * n - 1) / 8.0
    return out


def fuchsian_log_constants(n: int) -> np.ndarray:
    """log c_k with h_k = c_k g0^{-alpha_k} at the Fuchsian point (index k-1)."""
    m = n // 2
    rc = fuchsian_rung_constants(n)
    logc = np.zeros(m)
    logc[m - 1] = -0.5 * np.log(rc[m]) if n % 2 == 0 else -np.log(rc[m])
    for k in range(m - 1, 0, -1):
        logc[k - 1] = logc[k] - np.log(rc[k])
    return logc


@dataclass
class LogMetricTuple:
    """w_k = log h_k stored as ``ref + dev`` (arrays of shape (m, nodes))."""

    ref: np.ndarray
    dev: np.ndarray

    @property
    def w(self) -> np.ndarray:
        return self.ref + self.dev

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.w)

    @property
    def m(self) -> int:
        return self.ref.shape[0]

    def copy(self) -> "LogMetricTuple":
        return LogMetricTuple(self.ref.copy(), self.dev.copy())

    @classmethod
    def from_w(cls, w: np.ndarray, ref: np.ndarray) -> "LogMetricTuple":
        return cls(ref.copy(), np.asarray(w, dtype=float) - ref)


@dataclass
class Residual:
    """Residual rows divided by g0 (the globally defined form); zero off the interior."""

    r: np.ndarray
    sup: float

    def per_row(self) -> list[float]:
        return [float(np.max(np.abs(rk))) for rk in self.r]


def reference_tuple(spec: LadderSpec, metric: BackgroundMetric) -> np.ndarray:
    logc = fuchsian_log_constants(spec.n)
    logg = np.log(metric.g0)
    return np.stack([logc[k - 1] - spec.alpha(k) * logg for k in range(1, spec.m + 1)])


def fuchsian_tuple(spec: LadderSpec, metric: BackgroundMetric) -> LogMetricTuple:
    ref = reference_tuple(spec, metric)
    return LogMetricTuple(ref, np.zeros_like(ref))


def canonical(state: LogMetricTuple, spec: LadderSpec,
              metric: BackgroundMetric) -> LogMetricTuple:
    """Re-express ``state`` relative to the Fuchsian reference (no-op if it already is)."""
    ref = reference_tuple(spec, metric)
    if state.ref.shape == ref.shape and np.array_equal(state.ref, ref):
        return state
    return LogMetricTuple(ref, state.w - ref)


def tuple_from_h(h: np.ndarray, spec: LadderSpec, metric: BackgroundMetric) -> LogMetricTuple:
    ref = reference_tuple(spec, metric)
    return LogMetricTuple(ref, np.log(np.asarray(h, dtype=float)) - ref)


def rungs(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec,
          metric: BackgroundMetric, grid: Grid) -> list[np.ndarray]:
    """Rung fields [corner, rung_1, ..., rung_m] as coordinate densities."""
    state = canonical(state, spec, metric)
    n, m, v, g = spec.n, spec.m, state.dev, metric.g0
    rc = fuchsian_rung_constants(n)
    logc = fuchsian_log_constants(n)
    out = [None] * (m + 1)
    for k in range(1, m):
        out[k] = rc[k] * g * np.exp(v[k] - v[k - 1])
    out[m] = rc[m] * g * (np.exp(-2 * v[m - 1]) if spec.even else np.exp(-v[m - 1]))
    qsq_g = q.modulus_sq(grid.z) / g ** q.degree
    if spec.case == "qn":
        out[0] = np.exp(2 * logc[0]) * qsq_g * g * np.exp(2 * v[0])
    else:
        out[0] = np.exp(logc[0] + logc[1]) * qsq_g * g * np.exp(v[0] + v[1])
    return out


def _check_shapes(state: LogMetricTuple, spec: LadderSpec, grid: Grid):
    if state.dev.shape != (spec.m, grid.size):
        raise ValueError(f"state shape {state.dev.shape} does not match grid/spec "
                         f"({spec.m}, {grid.size})")


def _laplacian_w(state, spec, metric, grid):
    lap_v = np.stack([grid.laplacian @ vk for vk in state.dev])
    return lap_v - np.array([spec.alpha(k) for k in range(1, spec.m + 1)])[:, None] * metric.curvature


def raw_residual(state, q, spec, grid, metric=None) -> np.ndarray:
    """Unnormalized residual rows (coordinate densities), zero off the interior."""
    metric = metric or background_metric(grid)
    _check_shapes(state, spec, grid)
    state = canonical(state, spec, metric)
    if q.degree != spec.q_degree:
        raise SpecError(f"{spec.case} with n={spec.n} needs a degree-{spec.q_degree} differential")
    lw = _laplacian_w(state, spec, metric, grid)
    rg = rungs(state, q, spec, metric, grid)
    m = spec.m
    r = np.empty_like(lw)
    for k in range(1, m + 1):
        row = lw[k - 1] + rg[k]
        if k >= 2:
            row = row - rg[k - 1]
        if k == 1 or (k == 2 and spec.case == "qn-1"):
            row = row - rg[0]
        r[k - 1] = row
    r[:, ~grid.interior] = 0.0
    return r


def _residual(state, q, spec, grid, metric, case):
    if spec.case != case:
        raise SpecError(f"residual for {case} called with a {spec.case} spec")
    metric = metric or background_metric(grid)
    r = raw_residual(state, q, spec, grid, metric) / metric.g0
    return Residual(r, float(np.max(np.abs(r[:, grid.interior]))))


def residual_qn(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec, grid: Grid,
                metric: BackgroundMetric | None = None) -> Residual:
    return _residual(state, q, spec, grid, metric, "qn")


def residual_qn1(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec, grid: Grid,
                 metric: BackgroundMetric | None = None) -> Residual:
    return _residual(state, q, spec, grid, metric, "qn-1")


def residual(state, q, spec, grid, metric=None) -> Residual:
    return _residual(state, q, spec, grid, metric, spec.case)


def coupling_blocks(state, q, spec, grid, metric) -> dict[tuple[int, int], np.ndarray]:
    """Pointwise partial derivatives d r_k / d w_j of the algebraic part."""
    m = spec.m
    rg = rungs(state, q, spec, metric, grid)
    d: dict[tuple[int, int], np.ndarray] = {}

    def add(k, j, val):
        d[(k, j)] = d.get((k, j), 0.0) + val

    last = 2.0 if spec.even else 1.0
    for k in range(1, m + 1):
        # + rung_k
        if k < m:
            add(k, k, -rg[k]); add(k, k + 1, rg[k])
        else:
            add(k, k, -last * rg[m])
        # - rung_{k-1}
        if k >= 2:
            add(k, k - 1, rg[k - 1]); add(k, k, -rg[k - 1])
    if spec.case == "qn":
        add(1, 1, -2 * rg[0])
    else:
        for k in (1, 2):
            add(k, 1, -rg[0]); add(k, 2, -rg[0])
    return d


def jacobian(state, q, spec, grid, metric=None, restrict: bool = True) -> sp.csr_matrix:
    """Exact linearization of the raw residual in the w_k variables.

    With ``restrict`` the operator acts on interior unknowns only (Dirichlet
    values eliminated), ordered block-by-block in k.
    """
    metric = metric or background_metric(grid)
    m, N = spec.m, grid.size
    blocks = coupling_blocks(state, q, spec, grid, metric)
    mask = grid.interior.astype(float)
    rows = []
    for k in range(1, m + 1):
        row = []
        for j in range(1, m + 1):
            B = sp.diags(mask * blocks.get((k, j), np.zeros(N)))
            if k == j:
                B = B + grid.laplacian
            row.append(B)
        rows.append(row)
    J = sp.bmat(rows, format="csr")
    if restrict:
        sel = np.tile(grid.interior, m)
        J = J[sel][:, sel]
    return J.tocsr()


def to_bk(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec,
          metric: BackgroundMetric, grid: Grid) -> np.ndarray:
    """b_k = rung_k / g0 for k = 1..m (rows 0..m-1)."""
    rg = rungs(state, q, spec, metric, grid)
    return np.stack([rg[k] / metric.g0 for k in range(1, spec.m + 1)])


def bk_lower_bounds(spec: LadderSpec) -> np.ndarray:
    """km - k^2/2 for k = 1..m; proven for even n only."""
    m = spec.m
    k = np.arange(1, m + 1)
    return k * m - 0.5 * k**2


def to_fk(state: LogMetricTuple, q: DifferentialField, spec: LadderSpec,
          metric: BackgroundMetric, grid: Grid) -> np.ndarray:
    """f_1..f_{m+1}, the logs of the g0-normalized rungs; f_1 = -inf at zeros of q."""
    rg = rungs(state, q, spec, metric, grid)
    with np.errstate(divide="ignore"):
        return np.stack([np.log(r / metric.g0) for r in rg])
