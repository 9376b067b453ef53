"""Computational domains, the hyperbolic background metric, and differentials.

Three model domains are supported:

* ``radial-ball``: a disk of coordinate radius ``R`` in the Poincare disk,
  discretized along the radius only. Valid for rotationally symmetric data
  ``q = c z^p``.
* ``planar-ball``: the same disk on a uniform 2-D grid with a staircase
  Dirichlet closure.
* ``flat-torus``: a periodic rectangle with the flat metric ``g0 = 1``.

All Laplacians here are the complex Laplacian ``d_z d_zbar``, i.e. one quarter
of the flat Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad

DOMAIN_KINDS = ("radial-ball", "planar-ball", "flat-torus")
MIN_RESOLUTION = 16


class DomainError(ValueError):
    """Raised for points or domains outside the supported chart."""


@dataclass(frozen=True)
class Domain:
    kind: str
    resolution: int
    radius: float = 0.9
    periods: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")
        if self.resolution < MIN_RESOLUTION:
            raise DomainError(
                f"resolution {self.resolution} below minimum {MIN_RESOLUTION}")
        if self.kind != "flat-torus" and not 0.0 < self.radius < 1.0:
            raise DomainError("ball radius must satisfy 0 < R < 1")
        if self.kind == "flat-torus" and min(self.periods) <= 0:
            raise DomainError("torus periods must be positive")

    @property
    def is_hyperbolic(self) -> bool:
        return self.kind != "flat-torus"


@dataclass
class Grid:
    """Node layout and the discrete operators built on it.

    ``z`` holds complex node coordinates (real and non-negative for the
    radial kind). Fields on the grid are 1-D arrays indexed like ``z``.
    ``laplacian`` has zero rows on boundary nodes.
    """

    domain: Domain
    z: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    spacing: tuple[float, ...]
    weights: np.ndarray
    laplacian: sp.csr_matrix
    shape: tuple[int, ...]
    index: np.ndarray | None = None  # 2-D array of node ids (-1 = inactive)

    @property
    def kind(self) -> str:
        return self.domain.kind

    @property
    def size(self) -> int:
        return self.z.size

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def radius(self) -> np.ndarray:
        return np.abs(self.z)


def g0_poincare(point) -> np.ndarray | float:
    """Coordinate density 2/(1-|z|^2)^2 of the hyperbolic metric on the disk."""
    r2 = np.abs(np.asarray(point)) ** 2
    if np.any(r2 >= 1.0):
        raise DomainError("point outside the unit disk")
    out = 2.0 / (1.0 - r2) ** 2
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class BackgroundMetric:
    """Background density on K^{-1} and the analytic value of Delta log g0.

    For the hyperbolic disk ``curvature`` equals ``g0`` (Liouville's
    equation); for the flat torus ``g0 = 1`` and ``curvature = 0``.
    """

    g0: np.ndarray
    is_hyperbolic: bool
    curvature: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if np.any(self.g0 <= 0):
            raise DomainError("background density must be positive")
        if self.curvature is None:
            self.curvature = self.g0.copy() if self.is_hyperbolic else np.zeros_like(self.g0)


def background_metric(grid: Grid) -> BackgroundMetric:
    if grid.domain.is_hyperbolic:
        return BackgroundMetric(np.asarray(g0_poincare(grid.z)), True)
    return BackgroundMetric(np.ones(grid.size), False)


def liouville_defect(grid: Grid, metric: BackgroundMetric | None = None) -> float:
    """Sup over interior nodes of |Delta_h log g0 - g0| / g0.

    This is the pure stencil error of the closed-form metric; it is the
    reference scale for every discretization-order statement in the package.
    """
    metric = metric or background_metric(grid)
    if not metric.is_hyperbolic:
        return 0.0
    lap = grid.laplacian @ np.log(metric.g0)
    d = np.abs(lap - metric.g0)[grid.interior] / metric.g0[grid.interior]
    return float(d.max())


@dataclass(frozen=True)
class DifferentialField:
    """q = t * coeff * prod(z - z_i) dz^degree in the disk chart."""

    degree: int
    coeff: complex = 1.0
    zeros: tuple[complex, ...] = ()
    t: float = 1.0

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("differential degree must be >= 2")
        if self.t <= 0:
            raise ValueError("ray scale t must be positive")
        object.__setattr__(self, "zeros", tuple(complex(z) for z in self.zeros))

    @property
    def is_zero(self) -> bool:
        return self.coeff == 0

    def scaled(self, t: float) -> "DifferentialField":
        return replace(self, t=float(t))

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, self.t * complex(self.coeff), dtype=complex)
        for zi in self.zeros:
            out = out * (z - zi)
        return out

    def modulus_sq(self, z) -> np.ndarray:
        return np.abs(self.value(z)) ** 2

    def is_radial(self) -> bool:
        return all(zi == 0 for zi in self.zeros)

    def distance_to_zeros(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.is_zero:
            return np.full(z.shape, np.inf)
        if not self.zeros:
            return np.full(z.shape, np.inf)
        return np.min([np.abs(z - zi) for zi in self.zeros], axis=0)


def qsq_eval(q: DifferentialField, point, g=None):
    """Return (|q|^2, |q|^2_g) at ``point``; ``g`` defaults to the Poincare density."""
    qsq = q.modulus_sq(point)
    if g is None:
        g = g0_poincare(point)
    qsq_g = qsq / np.asarray(g, dtype=float) ** q.degree
    if np.ndim(qsq) == 0:
        return float(qsq), float(qsq_g)
    return qsq, qsq_g


def qnorm(q: DifferentialField, grid: Grid) -> float:
    """Midpoint-rule value of the coordinate-area integral of |q|^{2/n}."""
    if q.is_zero:
        return 0.0
    dens = q.modulus_sq(grid.z) ** (1.0 / q.degree)
    return float(np.sum(grid.weights * dens))


def check_differential(q: DifferentialField, grid: Grid) -> None:
    if grid.kind == "radial-ball" and not q.is_radial():
        raise DomainError("radial-ball needs a rotationally symmetric differential c z^p")
    if grid.kind == "flat-torus" and q.zeros:
        raise DomainError("only constant differentials are periodic on the flat torus")


# --------------------------------------------------------------------------
# grid construction


def build_grid(domain: Domain) -> Grid:
    if domain.kind == "radial-ball":
        return _radial_grid(domain)
    if domain.kind == "planar-ball":
        return _planar_grid(domain)
    return _torus_grid(domain)


def _radial_grid(domain: Domain) -> Grid:
    n, R = domain.resolution, domain.radius
    r = np.linspace(0.0, R, n)
    dr = r[1] - r[0]
    interior = np.ones(n, dtype=bool)
    interior[-1] = False
    boundary = ~interior

    # conservative stencil for (1/4)(f'' + f'/r); centre row from the disk of radius dr/2
    rows, cols, vals = [0, 0], [0, 1], [-1.0 / dr**2, 1.0 / dr**2]
    i = np.arange(1, n - 1)
    rp, rm = r[i] + 0.5 * dr, r[i] - 0.5 * dr
    scale = 0.25 / (r[i] * dr**2)
    rows += list(np.repeat(i, 3))
    cols += list(np.stack([i - 1, i, i + 1], axis=1).ravel())
    vals += list(np.stack([rm * scale, -(rp + rm) * scale, rp * scale], axis=1).ravel())
    lap = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    lo = np.clip(r - 0.5 * dr, 0.0, R)
    hi = np.clip(r + 0.5 * dr, 0.0, R)
    weights = np.pi * (hi**2 - lo**2)
    return Grid(domain, r.astype(complex), interior, boundary, (dr,), weights, lap, (n,))


def _rect_disk_area(x0, x1, y0, y1, R) -> float:
    a, b = max(x0, -R), min(x1, R)
    if a >= b:
        return 0.0

    def chord(x):
        s = np.sqrt(max(R * R - x * x, 0.0))
        return max(0.0, min(y1, s) - max(y0, -s))

    pts = [p for y in (y0, y1) if abs(y) < R
           for p in (-np.sqrt(R * R - y * y), np.sqrt(R * R - y * y)) if a < p < b]
    val, _ = quad(chord, a, b, points=pts or None, epsabs=1e-15, epsrel=1e-12, limit=200)
    return val


def _planar_grid(domain: Domain) -> Grid:
    n, R = domain.resolution, domain.radius
    x = np.linspace(-R, R, n)
    dx = x[1] - x[0]
    X, Y = np.meshgrid(x, x, indexing="ij")
    inside = X**2 + Y**2 < R**2
    nb = np.zeros_like(inside)
    nb[1:, :] |= inside[:-1, :]
    nb[:-1, :] |= inside[1:, :]
    nb[:, 1:] |= inside[:, :-1]
    nb[:, :-1] |= inside[:, 1:]
    # Dirichlet ring: non-interior 4-neighbours of interior nodes (x = +-R is never interior)
    active = inside | nb
    bnd2 = active & ~inside
    if np.any(np.abs(X + 1j * Y)[active] >= 1.0):
        raise DomainError("boundary ring leaves the unit disk; lower R or raise resolution")

    index = -np.ones(inside.shape, dtype=int)
    index[active] = np.arange(active.sum())
    z = (X + 1j * Y)[active]
    interior = inside[active]
    boundary = bnd2[active]

    ids = index[inside]
    ii, jj = np.nonzero(inside)
    rows, cols, vals = [], [], []
    c = 0.25 / dx**2
    rows.append(ids); cols.append(ids); vals.append(np.full(ids.size, -4 * c))
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nbr = index[ii + di, jj + dj]
        rows.append(ids); cols.append(nbr); vals.append(np.full(ids.size, c))
    N = z.size
    lap = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(N, N))

    weights = np.zeros(N)
    h = 0.5 * dx
    for k, zk in enumerate(z):
        xc, yc = zk.real, zk.imag
        cx, cy = np.array([xc - h, xc + h]), np.array([yc - h, yc + h])
        d2 = (cx[:, None] ** 2 + cy[None, :] ** 2)
        dmin2 = (0 if cx[0] <= 0 <= cx[1] else min(cx**2)) + (0 if cy[0] <= 0 <= cy[1] else min(cy**2))
        if d2.max() <= R * R:
            weights[k] = dx * dx
        elif dmin2 < R * R:
            weights[k] = _rect_disk_area(cx[0], cx[1], cy[0], cy[1], R)
    return Grid(domain, z, interior, boundary, (dx, dx), weights, lap, (n, n), index)


def _torus_grid(domain: Domain) -> Grid:
    n = domain.resolution
    Lx, Ly = domain.periods
    dx, dy = Lx / n, Ly / n
    x, y = np.arange(n) * dx, np.arange(n) * dy
    X, Y = np.meshgrid(x, y, indexing="ij")
    index = np.arange(n * n).reshape(n, n)
    ids = index.ravel()
    ii, jj = np.divmod(ids, n)
    rows, cols, vals = [ids], [ids], [np.full(ids.size, -0.5 / dx**2 - 0.5 / dy**2)]
    for di, dj, c in ((1, 0, 0.25 / dx**2), (-1, 0, 0.25 / dx**2),
                      (0, 1, 0.25 / dy**2), (0, -1, 0.25 / dy**2)):
        rows.append(ids)
        cols.append(index[(ii + di) % n, (jj + dj) % n])
        vals.append(np.full(ids.size, c))
    lap = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n * n, n * n))
    z = (X + 1j * Y).ravel()
    interior = np.ones(n * n, dtype=bool)
    return Grid(domain, z, interior, ~interior, (dx, dy), np.full(n * n, dx * dy), lap,
                (n, n), index)


def node_mask(grid: Grid, rmin: float = 0.0, rmax: float = np.inf) -> np.ndarray:
    """Interior nodes with rmin <= |z| <= rmax."""
    r = grid.radius
    return grid.interior & (r >= rmin - 1e-12) & (r <= rmax + 1e-12)


def diameter_profile(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Restrict a planar-ball field to the nodes on the positive real axis."""
    if grid.kind != "planar-ball":
        raise DomainError("diameter restriction needs a planar-ball grid")
    sel = (np.abs(grid.z.imag) < 1e-12) & (grid.z.real >= -1e-12) & grid.interior
    order = np.argsort(grid.z.real[sel])
    return grid.z.real[sel][order], np.asarray(values)[..., sel][..., order]


__all__: Sequence[str] = (
    "Domain", "Grid", "BackgroundMetric", "DifferentialField", "DomainError",
    "g0_poincare", "background_metric", "liouville_defect", "qsq_eval", "qnorm",
    "build_grid", "node_mask", "check_differential", "diameter_profile",
)
