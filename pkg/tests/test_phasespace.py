import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sublab.phasespace import (BumpChart, CutoffFamily, FlatChart, PhasePoint, chi, cutoff_eval, eval_frame,
                               frame, get_chart, in_cone, norm_constant, phase_jet, poisson_bracket, tilde_chi)
from oracles import fd_bracket, fd_gradient, flat_frame

FLAT, BUMP = get_chart("flat"), get_chart("bump")


def test_flat_frame_examples():
    h1, h2, h3 = eval_frame(FLAT, PhasePoint(0, 0, 0, 1, 0, 0))
    assert (h1.value, h2.value, h3.value) == pytest.approx((1, 0, 0))
    h1, h2, h3 = eval_frame(FLAT, PhasePoint(0, 0, math.pi / 2, 1, 0, 0))
    assert (h1.value, h2.value, h3.value) == pytest.approx((0, 1, 0), abs=1e-15)


def test_bump_frame_against_fd():
    pt = PhasePoint(0, 0, 0, 1, 0, 0)
    h1 = eval_frame(BUMP, pt)[0]
    assert h1.value == pytest.approx(math.exp(-BUMP.lam(0.0, 0.0)))
    assert BUMP.lam(0.0, 0.0) == pytest.approx(math.exp(-1))
    pt = PhasePoint(0.2, -0.3, 1.1, 0.7, -1.3, 0.4)
    for i in range(3):
        jet = eval_frame(BUMP, pt)[i]
        fd = fd_gradient(lambda *c: frame(BUMP, *c)[i], pt.coords())
        np.testing.assert_allclose(jet.grad, fd, atol=1e-6)


def test_registry():
    assert isinstance(get_chart("flat"), FlatChart)
    b = get_chart("bump(2,0.5)")
    assert isinstance(b, BumpChart) and b.a == 2 and b.radius == 0.5
    with pytest.raises(KeyError):
        get_chart("sphere")


@pytest.mark.parametrize("chart", [FLAT, BUMP, BumpChart(0.5, 1.5)], ids=["flat", "bump", "bump-wide"])
def test_fd_consistency_of_chart(chart):
    for x, y in [(0.1, 0.2), (-0.3, 0.25), (0.0, 0.0)]:
        gerr, herr = chart.fd_check(x, y)
        assert gerr < 1e-7 and herr < 1e-6


def test_flat_curvature_vanishes():
    x = np.linspace(-1, 1, 7)
    assert np.all(FLAT.curvature(x, x) == 0)
    assert np.all(FLAT.k_minus(x, x) == 0.5)


def test_bump_curvature_matches_laplacian_by_fd():
    x, y, s = 0.2, -0.1, 1e-4
    lap = (BUMP.lam(x + s, y) + BUMP.lam(x - s, y) + BUMP.lam(x, y + s) + BUMP.lam(x, y - s)
           - 4 * BUMP.lam(x, y)) / s ** 2
    assert BUMP.curvature(x, y) == pytest.approx(-math.exp(-2 * BUMP.lam(x, y)) * lap, rel=1e-6)


def test_bracket_examples():
    assert poisson_bracket(FLAT, "H1", "H3", PhasePoint(0, 0, math.pi / 2, 1, 0, 0)) == pytest.approx(1)
    assert poisson_bracket(FLAT, "H2", "H3", PhasePoint(0, 0, 0, 1, 0, 0)) == pytest.approx(-1)
    assert poisson_bracket(FLAT, "H1", "H2", PhasePoint(0.3, 0.1, 2.0, 0.5, -1, 2)) == 0


@pytest.mark.parametrize("chart", [FLAT, BUMP], ids=["flat", "bump"])
def test_bracket_identities_at_many_points(chart):
    pt = PhasePoint(*chart.sample(np.random.default_rng(1), 1000))
    t = time.perf_counter()
    h1, h2, h3 = frame(chart, *pt.coords())
    K = chart.curvature(pt.x, pt.y)
    e13 = poisson_bracket(chart, "H1", "H3", pt) - h2
    e23 = poisson_bracket(chart, "H2", "H3", pt) + h1
    e12 = poisson_bracket(chart, "H1", "H2", pt) + K * h3
    assert time.perf_counter() - t < 1.0
    assert max(np.abs(e13).max(), np.abs(e23).max(), np.abs(e12).max()) <= 1e-9


def test_bracket_against_fd_oracle():
    pt = PhasePoint(0.15, -0.2, 0.9, 1.1, 0.3, -0.7)

    def f(x, y, z, xi, eta, zeta):
        h1, h2, h3 = frame(BUMP, x, y, z, xi, eta, zeta)
        return h1 * h2 + h3 ** 3

    def g(*c):
        return frame(BUMP, *c)[0]

    assert poisson_bracket(BUMP, f, g, pt) == pytest.approx(fd_bracket(f, g, pt.coords()), abs=1e-6)


def test_base_derivatives_of_frame():
    # d_x H1 = -lam_x H1 - e^{-lam}(lam_xx sin z - lam_xy cos z) H3, and the analogous three
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, y = rng.uniform(-0.5, 0.5, 2)
        z, xi, eta, zeta = rng.normal(size=4)
        pt = PhasePoint(x, y, z, xi, eta, zeta)
        h1, h2, h3 = eval_frame(BUMP, pt)
        lx, ly = BUMP.grad(x, y)
        lxx, lxy, lyy = BUMP.hess(x, y)
        e, c, s = math.exp(-BUMP.lam(x, y)), math.cos(pt.z), math.sin(pt.z)
        H1, H2, H3 = h1.value, h2.value, zeta
        assert h1.grad[0] == pytest.approx(-lx * H1 - e * (lxx * s - lxy * c) * H3)
        assert h1.grad[1] == pytest.approx(-ly * H1 - e * (lxy * s - lyy * c) * H3)
        assert h2.grad[0] == pytest.approx(-lx * H2 + e * (lxx * c + lxy * s) * H3)
        assert h2.grad[1] == pytest.approx(-ly * H2 + e * (lxy * c + lyy * s) * H3)
        assert np.all(h3.grad == [0, 0, 0, 0, 0, 1])


def test_phasepoint_reduces_angle():
    assert PhasePoint(0, 0, 7.0, 0, 0, 0).z == pytest.approx(7.0 - 2 * math.pi)
    assert PhasePoint(0, 0, -0.5, 0, 0, 0).z == pytest.approx(2 * math.pi - 0.5)


def test_phase_jet_of_constant_and_linearity():
    pj = phase_jet(lambda *c: 4.0 + 0 * c[0], (0.1, 0.2, 0.3, 1, 2, 3))
    assert np.all(pj.grad == 0)
    a = phase_jet(lambda *c: 2 * frame(FLAT, *c)[0] - 3 * frame(FLAT, *c)[1], (0.1, 0.2, 0.3, 1, 2, 3))
    b = phase_jet(lambda *c: frame(FLAT, *c)[0], (0.1, 0.2, 0.3, 1, 2, 3))
    c = phase_jet(lambda *c: frame(FLAT, *c)[1], (0.1, 0.2, 0.3, 1, 2, 3))
    np.testing.assert_allclose(a.grad, 2 * b.grad - 3 * c.grad)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5, allow_nan=False))
def test_chi_properties(t):
    v = chi(t)
    assert 0.0 <= v <= 1.0
    if abs(t) <= 1:
        assert v == 1.0
    if abs(t) >= 2:
        assert v == 0.0
    assert tilde_chi(t) == pytest.approx(1.0 - v)
    assert chi(-t) == v


def test_chi_monotone():
    t = np.linspace(0, 3, 3001)
    assert np.all(np.diff(chi(t)) <= 0)
    assert np.all(np.diff(chi(-t)) <= 0)


def test_cutoff_family_validation():
    with pytest.raises(ValueError):
        CutoffFamily(R=1.0)
    with pytest.raises(ValueError):
        CutoffFamily(eps=1.0)
    with pytest.raises(ValueError):
        CutoffFamily(R1=0.5)


def test_cutoff_eval_values():
    fam = CutoffFamily(R=4.0, eps=0.5, R1=2.0, h=0.1)
    pt = PhasePoint(0, 0, 0, 1, 0, 0)
    assert cutoff_eval(fam, "chi", 0.5) == 1.0
    assert cutoff_eval(fam, "chiB_R", pt) == 1.0
    assert cutoff_eval(fam, "tilde_chiB_R", pt) == 0.0
    far = PhasePoint(0, 0, 0, 100, 0, 0)
    assert cutoff_eval(fam, "chiC_eps", far) == 0.0
    assert cutoff_eval(fam, "rho_R1", pt) == 0.0
    assert cutoff_eval(fam, "tilde_rho_R1", pt) == 1.0
    assert cutoff_eval(fam, "rho_R1", PhasePoint(0, 0, 0, 100, 0, 0)) == 1.0
    with pytest.raises(KeyError):
        cutoff_eval(fam, "nope", pt)


def test_cone_membership():
    assert in_cone(FLAT, PhasePoint(0, 0, 0, 100, 0, 1), 0.5)
    assert not in_cone(FLAT, PhasePoint(0, 0, 0, 1, 5, 1), 0.5)
    with pytest.raises(ValueError):
        in_cone(FLAT, PhasePoint(0, 0, 0, 1, 0, 0), 0.0)


def test_norm_constant_bounds_frame():
    C0 = norm_constant(BUMP)
    rng = np.random.default_rng(2)
    x, y, z, xi, eta, zeta = BUMP.sample(rng, 500)
    h1, h2, h3 = frame(BUMP, x, y, z, xi, eta, zeta)
    p2 = xi ** 2 + eta ** 2 + zeta ** 2
    q = h1 ** 2 + h2 ** 2 + h3 ** 2
    assert np.all(q <= C0 * p2) and np.all(p2 <= C0 * q)
    assert norm_constant(FLAT) >= 1.0


def test_flat_frame_matches_closed_form():
    c = (0.1, 0.2, 0.7, 1.5, -0.4, 2.0)
    np.testing.assert_allclose(frame(FLAT, *c), flat_frame(*c))
