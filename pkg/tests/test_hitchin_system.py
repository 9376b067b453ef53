import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fsolve

from cyclic_hitchin.elliptic_solver import residual_floor
from cyclic_hitchin.geometry import DifferentialField, Domain, background_metric, build_grid
from cyclic_hitchin.hitchin_system import (
    LadderSpec, LogMetricTuple, SpecError, fuchsian_rung_constants, fuchsian_tuple, jacobian,
    raw_residual, residual, residual_qn, residual_qn1, rungs, to_bk, to_fk,
)

from conftest import flat_state


@pytest.mark.parametrize("case,n", [("qn", 2), ("qn", 1), ("qn-1", 3), ("qn-1", 2), ("q2", 4)])
def test_excluded_cases(case, n):
    with pytest.raises(SpecError):
        LadderSpec(case, n)


def test_hopf_message():
    with pytest.raises(SpecError, match="q_2"):
        LadderSpec("qn", 2)


@pytest.mark.parametrize("n,m,parity", [(3, 1, "odd"), (4, 2, "even"), (7, 3, "odd")])
def test_spec_fields(n, m, parity):
    s = LadderSpec("qn", n)
    assert s.m == m and s.parity == parity


def test_fuchsian_rungs_closed_form(radial400):
    metric = background_metric(radial400)
    expect = {4: [1.5, 2.0], 5: [2.0, 3.0], 6: [2.5, 4.0, 4.5]}
    for n, vals in expect.items():
        s = LadderSpec("qn", n)
        bk = to_bk(fuchsian_tuple(s, metric), DifferentialField(n, 0.0), s, metric, radial400)
        assert np.allclose(bk, np.array(vals)[:, None], rtol=1e-14)


def test_fuchsian_rungs_from_h(radial400):
    # differencing h directly, not through the stored deviation
    metric = background_metric(radial400)
    s = LadderSpec("qn", 6)
    h = fuchsian_tuple(s, metric).h
    g = metric.g0
    assert np.allclose(h[1] / h[0], 2.5 * g, rtol=1e-12)
    assert np.allclose(h[2] / h[1], 4.0 * g, rtol=1e-12)
    assert np.allclose(h[2] ** -2, 4.5 * g, rtol=1e-12)


@pytest.mark.parametrize("case", ["qn", "qn-1"])
@pytest.mark.parametrize("n", [4, 5, 6, 7])
def test_fuchsian_zero_residual(case, n, radial2000):
    s = LadderSpec(case, n)
    metric = background_metric(radial2000)
    q0 = DifferentialField(s.q_degree, 0.0)
    assert residual(fuchsian_tuple(s, metric), q0, s, radial2000, metric).sup <= 1e-6


def test_fuchsian_residual_via_full_stencil_second_order():
    # residual with log h fully differenced shrinks like the Liouville defect
    errs = []
    for N in (250, 500, 1000):
        g = build_grid(Domain("radial-ball", N))
        metric = background_metric(g)
        s = LadderSpec("qn", 4)
        w = fuchsian_tuple(s, metric).w
        lap = np.stack([g.laplacian @ wk for wk in w])
        rg = [None, 1.5 * metric.g0, 2.0 * metric.g0]
        r = np.stack([lap[0] + rg[1], lap[1] + rg[2] - rg[1]])[:, g.interior] / metric.g0[g.interior]
        errs.append(np.abs(r).max())
    assert 3 < errs[0] / errs[1] < 5 and 3 < errs[1] / errs[2] < 5


def test_flat_constant_ladder_exact(torus16):
    s = LadderSpec("qn", 4)
    q = DifferentialField(4, 2.0)
    st_ = flat_state(s, torus16, [2 ** -0.75, 2 ** -0.25])
    r = residual_qn(st_, q, s, torus16)
    # exact up to the round-off of exp/log on the stored tuple
    assert r.sup <= min(1e-12, residual_floor(st_, q, s, torus16, background_metric(torus16)))
    rg = rungs(st_, q, s, background_metric(torus16), torus16)
    assert all(np.allclose(x, np.sqrt(2), rtol=1e-14) for x in rg)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
def test_flat_unit_ladder(n, torus16):
    s = LadderSpec("qn", n)
    st_ = flat_state(s, torus16, np.ones(s.m))
    q = DifferentialField(n, 1.0)
    assert residual_qn(st_, q, s, torus16).sup <= residual_floor(st_, q, s, torus16, background_metric(torus16))


def test_qn1_flat_constant_ladder_bruteforce(torus16):
    s = LadderSpec("qn-1", 4)
    qsq = 0.25

    def eqs(w):
        h1, h2 = np.exp(w)
        P = h1 * h2 * qsq
        return [h2 / h1 - P, h2**-2 - h2 / h1 - P]

    w = fsolve(eqs, [0.0, 0.0], xtol=1e-15)
    assert np.max(np.abs(eqs(w))) < 1e-14
    st_ = flat_state(s, torus16, np.exp(w))
    assert residual_qn1(st_, DifferentialField(3, 0.5), s, torus16).sup <= 1e-13


def test_residual_case_mismatch(torus16):
    s = LadderSpec("qn", 4)
    st_ = flat_state(s, torus16, [1.0, 1.0])
    with pytest.raises(SpecError):
        residual_qn1(st_, DifferentialField(4, 1.0), s, torus16)
    with pytest.raises(SpecError):
        residual_qn(st_, DifferentialField(3, 1.0), s, torus16)


def test_grid_mismatch(torus16, radial400):
    s = LadderSpec("qn", 4)
    st_ = flat_state(s, torus16, [1.0, 1.0])
    with pytest.raises(ValueError):
        residual(st_, DifferentialField(4, 1.0), s, radial400)


def test_qn1_monotone_in_w1(planar64):
    s = LadderSpec("qn-1", 4)
    metric = background_metric(planar64)
    q = DifferentialField(3, 1.0, (0.1, 0.2j, -0.3))
    st_ = fuchsian_tuple(s, metric)
    node = int(np.flatnonzero(planar64.interior)[100])
    eps = 1e-6
    pert = st_.copy()
    pert.dev[0, node] += eps
    d = (raw_residual(pert, q, s, planar64, metric) - raw_residual(st_, q, s, planar64, metric))[0, node]
    assert d < 0  # stencil centre and both algebraic terms are decreasing in w_1


VARIANTS = [("qn", 4), ("qn", 5), ("qn-1", 4), ("qn-1", 7), ("qn", 6), ("qn-1", 6)]


@pytest.mark.parametrize("case,n", VARIANTS)
@settings(max_examples=8)
@given(seed=st.integers(0, 2**31 - 1))
def test_jacobian_matches_finite_differences(case, n, seed):
    g = build_grid(Domain("planar-ball", 20))
    metric = background_metric(g)
    s = LadderSpec(case, n)
    rng = np.random.default_rng(seed)
    q = DifferentialField(s.q_degree, 2.0, tuple(rng.uniform(-0.5, 0.5, 2) + 1j * rng.uniform(-0.5, 0.5, 2)))
    base = fuchsian_tuple(s, metric)
    st_ = LogMetricTuple(base.ref, 0.2 * rng.standard_normal(base.dev.shape))
    v = rng.standard_normal(base.dev.shape)
    v[:, ~g.interior] = 0
    v /= np.linalg.norm(v)
    J = jacobian(st_, q, s, g, metric, restrict=False)
    Jv = (J @ v.ravel()).reshape(v.shape)
    r0 = raw_residual(st_, q, s, g, metric)
    errs = []
    for eps in (1e-4, 1e-5):
        pert = LogMetricTuple(st_.ref, st_.dev + eps * v)
        fd = (raw_residual(pert, q, s, g, metric) - r0) / eps
        errs.append(np.max(np.abs(fd - Jv)[:, g.interior] / metric.g0[g.interior]))
    assert errs[1] < 1e-3
    assert errs[1] < 0.2 * errs[0] or errs[1] < 1e-7  # first order in eps


def test_jacobian_fuchsian_diagonal(torus16):
    s = LadderSpec("qn", 4)
    metric = background_metric(torus16)
    J = jacobian(fuchsian_tuple(s, metric), DifferentialField(4, 0.0), s, torus16, metric)
    centre = torus16.laplacian.diagonal()[0]
    assert J[0, 0] == pytest.approx(-1.5 + centre, rel=1e-14)


@pytest.mark.parametrize("n", [6, 7])
def test_jacobian_ladder_sparsity(n, torus16):
    s = LadderSpec("qn", n)
    metric = background_metric(torus16)
    N = torus16.size
    J = jacobian(fuchsian_tuple(s, metric), DifferentialField(n, 1.0), s, torus16, metric).tocsr()
    for k in range(s.m):
        for j in range(s.m):
            if abs(k - j) > 1:
                assert J[k * N:(k + 1) * N, j * N:(j + 1) * N].nnz == 0


def test_jacobian_symmetric_negative_definite():
    g = build_grid(Domain("planar-ball", 24))
    s = LadderSpec("qn-1", 6)
    metric = background_metric(g)
    q = DifferentialField(5, 3.0, (0.2, -0.1j))
    J = jacobian(fuchsian_tuple(s, metric), q, s, g, metric).toarray()
    assert np.allclose(J, J.T, atol=1e-12 * np.abs(J).max())
    assert np.linalg.eigvalsh(J).max() < 0


def test_to_fk_constant_ladder(torus16):
    s = LadderSpec("qn", 4)
    st_ = flat_state(s, torus16, [2 ** -0.75, 2 ** -0.25])
    f = to_fk(st_, DifferentialField(4, 2.0), s, background_metric(torus16), torus16)
    assert np.allclose(np.exp(f), np.sqrt(2), rtol=1e-14)


def test_to_fk_fuchsian_masked(radial400):
    s = LadderSpec("qn", 5)
    metric = background_metric(radial400)
    f = to_fk(fuchsian_tuple(s, metric), DifferentialField(5, 0.0), s, metric, radial400)
    assert np.all(np.isneginf(f[0]))
    assert np.allclose(np.exp(f[1:]), fuchsian_rung_constants(5)[1:, None])
