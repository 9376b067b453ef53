import math

import numpy as np
import pytest
import sympy as syp
from hypothesis import given
from hypothesis import strategies as st

from cyclic_hitchin.geometry import (
    DifferentialField, Domain, DomainError, background_metric, build_grid, check_differential,
    diameter_profile, g0_poincare, liouville_defect, node_mask, qnorm, qsq_eval,
)


def test_liouville_symbolic():
    x, y = syp.symbols("x y", real=True)
    g = 2 / (1 - x**2 - y**2) ** 2
    lap = (syp.diff(syp.log(g), x, 2) + syp.diff(syp.log(g), y, 2)) / 4
    assert syp.simplify(lap - g) == 0


def test_g0_values():
    assert g0_poincare(0) == 2.0
    assert g0_poincare(0.5) == pytest.approx(2 / 0.75**2, rel=1e-15)
    assert g0_poincare(0.5j) == pytest.approx(3.555556, rel=1e-6)


@given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_g0_monotone_in_radius(r1, r2):
    if r1 < r2:
        assert g0_poincare(r1) < g0_poincare(r2)


@pytest.mark.parametrize("z", [1.0, 1j, 1.5, -0.8 - 0.8j])
def test_g0_outside_disk(z):
    with pytest.raises(DomainError):
        g0_poincare(z)


def test_qsq_eval_examples():
    q = DifferentialField(4, 1.0, (0,))
    assert qsq_eval(q, 0.5, g=1.0) == pytest.approx((0.25, 0.25))
    g = 2 / 0.75**2
    a, b = qsq_eval(q, 0.5)
    assert a == pytest.approx(0.25) and b == pytest.approx(0.25 / g**4, rel=1e-14)
    assert qsq_eval(DifferentialField(4, 0.0), 0.3) == (0.0, 0.0)


@given(st.floats(0.1, 100.0), st.complex_numbers(max_magnitude=0.8))
def test_qsq_ray_scaling(t, z):
    q = DifferentialField(5, 0.7 + 0.2j, (0.1, -0.3j))
    a1, b1 = qsq_eval(q, z)
    a2, b2 = qsq_eval(q.scaled(t), z)
    assert a2 == pytest.approx(t * t * a1, rel=1e-12, abs=1e-300)
    assert b2 == pytest.approx(t * t * b1, rel=1e-12, abs=1e-300)


def test_qnorm_zero_and_constant_torus(torus16):
    assert qnorm(DifferentialField(4, 0.0), torus16) == 0.0
    g = build_grid(Domain("flat-torus", 16, periods=(2.0, 0.5)))
    assert qnorm(DifferentialField(4, 4.0), g) == pytest.approx(2.0 * 1.0, rel=1e-14)


def test_qnorm_planar_second_order():
    q = DifferentialField(4, 1.0, (0,))
    exact = 2 * math.pi * 0.9**2.5 / 2.5
    errs = [abs(qnorm(q, build_grid(Domain("planar-ball", n))) - exact) for n in (64, 128, 256)]
    assert errs[-1] < 1e-5
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.0 < e1 / e2 < 5.0


def test_qnorm_radial_exact_limit():
    q = DifferentialField(4, 1.0, (0,))
    exact = 2 * math.pi * 0.9**2.5 / 2.5
    assert qnorm(q, build_grid(Domain("radial-ball", 2000))) == pytest.approx(exact, rel=1e-8)


@given(st.floats(0.01, 1e4))
def test_qnorm_ray_scaling(t):
    g = build_grid(Domain("radial-ball", 64))
    q = DifferentialField(6, 0.3, (0, 0))
    assert qnorm(q.scaled(t), g) == pytest.approx(t ** (2 / 6) * qnorm(q, g), rel=1e-13)


def test_build_grid_examples():
    t = build_grid(Domain("flat-torus", 16))
    assert t.size == 256 and t.boundary.sum() == 0
    r = build_grid(Domain("radial-ball", 1000))
    assert r.size == 1000 and r.boundary.sum() == 1 and r.z.real[-1] == pytest.approx(0.9)
    p = build_grid(Domain("planar-ball", 64))
    assert np.all((np.abs(p.z) < 0.9) == p.interior)
    assert np.all(np.abs(p.z[p.boundary]) >= 0.9)


def test_build_grid_deterministic():
    a, b = build_grid(Domain("planar-ball", 40)), build_grid(Domain("planar-ball", 40))
    assert np.array_equal(a.z, b.z) and np.array_equal(a.weights, b.weights)


@pytest.mark.parametrize("kw", [dict(kind="disk", resolution=32), dict(kind="radial-ball", resolution=8),
                                dict(kind="planar-ball", resolution=32, radius=1.0),
                                dict(kind="flat-torus", resolution=32, periods=(1.0, 0.0))])
def test_domain_validation(kw):
    with pytest.raises(DomainError):
        Domain(**kw)


def test_planar_ring_inside_unit_disk():
    with pytest.raises(DomainError):
        build_grid(Domain("planar-ball", 16, radius=0.99))


def test_liouville_defect_second_order():
    for kind, ns in (("radial-ball", (250, 500, 1000)), ("planar-ball", (65, 129, 257))):
        d = [liouville_defect(build_grid(Domain(kind, n))) for n in ns]
        for a, b in zip(d, d[1:]):
            assert 3.0 < a / b < 5.0, (kind, d)
    assert liouville_defect(build_grid(Domain("flat-torus", 16))) == 0.0


def test_log_harmonic_away_from_zeros():
    q = DifferentialField(4, 1.0, (0.2 + 0.1j, -0.3))
    errs = []
    for n in (65, 129):
        g = build_grid(Domain("planar-ball", n))
        lap = g.laplacian @ np.log(q.modulus_sq(g.z))
        far = g.interior & (q.distance_to_zeros(g.z) > 3 * g.h)
        errs.append(np.max(np.abs(lap[far])) * g.h**2)
    # worst nodes sit ~3 spacings from a zero where the stencil error is ~ h^2 / d^4
    assert errs[1] == pytest.approx(errs[0], rel=0.3)


def test_log_harmonic_fixed_region_second_order():
    q = DifferentialField(4, 1.0, (0.2 + 0.1j, -0.3))
    errs = []
    for n in (65, 129, 257):
        g = build_grid(Domain("planar-ball", n))
        lap = g.laplacian @ np.log(q.modulus_sq(g.z))
        far = g.interior & (q.distance_to_zeros(g.z) > 0.15)
        errs.append(np.max(np.abs(lap[far])))
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_background_metric_kinds(radial400, torus16):
    m = background_metric(radial400)
    assert m.is_hyperbolic and np.array_equal(m.curvature, m.g0)
    t = background_metric(torus16)
    assert not t.is_hyperbolic and np.all(t.g0 == 1) and np.all(t.curvature == 0)


def test_check_differential(radial400, torus16):
    with pytest.raises(DomainError):
        check_differential(DifferentialField(4, 1.0, (0.1,)), radial400)
    with pytest.raises(DomainError):
        check_differential(DifferentialField(4, 1.0, (0.1,)), torus16)
    check_differential(DifferentialField(4, 1.0, (0, 0)), radial400)


def test_differential_validation():
    with pytest.raises(ValueError):
        DifferentialField(1)
    with pytest.raises(ValueError):
        DifferentialField(3, t=0.0)


def test_mask_and_diameter(planar64):
    m = node_mask(planar64, 0.3, 0.7)
    r = np.abs(planar64.z[m])
    assert r.min() >= 0.3 - 1e-12 and r.max() <= 0.7 + 1e-12
    x, v = diameter_profile(planar64, np.abs(planar64.z))
    assert np.all(np.diff(x) > 0) and np.allclose(v, x)
