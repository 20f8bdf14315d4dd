import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projlab.catalog import stereographic_sphere
from projlab.geom import (ChartDomain, ConstantMetric, DegenerateError, ExprConnection, ExprMetric, FlatConnection,
                          LeviCivita, OneForm, ProjectivelyShifted, check_metric, christoffel, curvature,
                          projective_diff, projective_weyl, riemann_ricci)
from projlab.scenario import random_one_form

from conftest import beltrami, flat, klein

P = np.array([0.3, -0.2])

# Symbolic oracle (sympy, exact arithmetic) for the gnomonic sphere chart at (0.3, -0.2)
BELTRAMI_GAMMA = [[[-0.5309734513274337, 0.17699115044247787], [0.17699115044247787, 0.0]],
                  [[0.0, -0.26548672566371684], [-0.26548672566371684, 0.35398230088495575]]]
BELTRAMI_R0101 = 0.8536298848774375
# Symbolic oracle: projective Weyl tensor of diag(1 + 0.3 sin x2, 1, 1) at (0.1, 0.2, -0.3)
WEYL_SIN = {(0, 1, 0, 1): 0.02368660916158234, (0, 1, 1, 0): -0.02368660916158234,
            (1, 0, 0, 1): -0.025098349998863057, (1, 0, 1, 0): 0.025098349998863057,
            (2, 0, 0, 2): 0.025098349998863057, (2, 0, 2, 0): -0.025098349998863057,
            (2, 1, 1, 2): 0.02368660916158234, (2, 1, 2, 1): -0.02368660916158234}


def sin_metric3(arg="x2"):
    return ExprMetric([[f"1 + 0.3*sin({arg})", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])


def perturbed2():
    return ExprMetric([["1 + 0.3*sin(x2)", "0"], ["0", "1 + 0.2*x1^2"]])


# --------------------------------------------------------------------------
# charts

def test_chart_sampling_is_deterministic_and_inside():
    ch = ChartDomain.box(3, 0.5)
    a, b = ch.sample(40, seed=7), ch.sample(40, seed=7)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (40, 3) and np.all(ch.contains(a))
    assert not np.array_equal(a, ch.sample(40, seed=8))
    assert np.all(np.abs(ch.sample(40, seed=1, shrink=0.2)) <= 0.1)


def test_chart_exclusion_is_respected():
    ch = ChartDomain.box(2, 1.0, exclusion="x1 - x2")
    pts = ch.sample(100, seed=3)
    assert len(pts) == 100 and np.all(pts[:, 0] > pts[:, 1])


@pytest.mark.parametrize("lo, hi", [((0, 0), (1,)), ((0,), (1,)), ((1, 0), (0, 1))])
def test_bad_chart_bounds(lo, hi):
    with pytest.raises(ValueError):
        ChartDomain(lo, hi)


# --------------------------------------------------------------------------
# metrics and Christoffel symbols

def test_euclidean_christoffel_vanish():
    assert np.all(christoffel(flat(2), P) == 0.0)


def test_polar_christoffel_symbols():
    g = ExprMetric([["1", "0"], ["0", "x1^2"]])  # dr^2 + r^2 dtheta^2
    G = christoffel(g, np.array([2.0, 0.4]))
    assert G[0, 1, 1] == pytest.approx(-2.0, abs=1e-15)
    assert G[1, 0, 1] == pytest.approx(0.5, abs=1e-15)
    assert G[1, 1, 0] == pytest.approx(0.5, abs=1e-15)


def test_beltrami_christoffel_against_symbolic_oracle():
    np.testing.assert_allclose(christoffel(beltrami(2), P), BELTRAMI_GAMMA, atol=1e-15)


def test_beltrami_riemann_against_symbolic_oracle():
    R = riemann_ricci(LeviCivita(beltrami(2)), P).riemann
    assert R[0, 1, 0, 1] == pytest.approx(BELTRAMI_R0101, rel=1e-13)


def test_metric_sanity_report():
    rep = check_metric(beltrami(2), ChartDomain.box(2, 0.5).sample(30))
    assert rep["nondegenerate"] and rep["signature_constant"] and rep["positive_index"] == 2
    assert rep["max_asymmetry"] == 0.0
    rep = check_metric(ExprMetric([["x1", "0"], ["0", "1"]]), np.array([[0.5, 0.0], [-0.5, 0.0]]))
    assert not rep["signature_constant"]


def test_degenerate_metric_reports_point():
    g = ExprMetric([["x1", "0"], ["0", "1"]])
    with pytest.raises(DegenerateError) as ei:
        christoffel(g, np.array([[0.5, 0.1], [0.0, 0.2]]))
    assert ei.value.point == [0.0, 0.2]


def test_constant_metric_jets():
    g = ConstantMetric([[2.0, 1.0], [1.0, 3.0]])
    G, dg = g.jet1(np.zeros((4, 2)))
    assert G.shape == (4, 2, 2) and not dg.any()
    assert not christoffel(g, P).any()


def test_analytic_christoffel_derivative_matches_finite_difference():
    conn = LeviCivita(beltrami(2))
    _, dG = conn.gamma_d1(P)
    h = 1e-5
    for c in range(2):
        e = np.zeros(2)
        e[c] = h
        fd = (conn.gamma(P + e) - conn.gamma(P - e)) / (2 * h)
        np.testing.assert_allclose(dG[..., c], fd, atol=1e-9)


# --------------------------------------------------------------------------
# curvature

@pytest.mark.parametrize("g, n, k", [(beltrami(2), 2, 1.0), (beltrami(3), 3, 1.0), (klein(2), 2, -1.0),
                                     (klein(3), 3, -1.0), (flat(3), 3, 0.0)])
def test_constant_curvature_ricci(g, n, k):
    x = ChartDomain.box(n, 0.5).sample(20, seed=1)
    ct = curvature(LeviCivita(g), x)
    np.testing.assert_allclose(ct.ricci, (n - 1) * k * g.value(x), atol=1e-12)
    # R^i_jkl = k (delta^i_k g_jl - delta^i_l g_jk)
    I = np.eye(n)
    G = g.value(x)
    R = k * (np.einsum("ik,...jl->...ijkl", I, G) - np.einsum("il,...jk->...ijkl", I, G))
    np.testing.assert_allclose(ct.riemann, R, atol=1e-12)


@pytest.mark.parametrize("g", [beltrami(2), perturbed2(), sin_metric3(), klein(3)], ids=["S2", "pert", "sin", "H3"])
def test_riemann_symmetries(g):
    n = g.dim
    x = ChartDomain.box(n, 0.5).sample(10, seed=2)
    ct = curvature(LeviCivita(g), x)
    R = ct.riemann
    assert ct.antisymmetry_defect() <= 1e-12
    bianchi = R + np.einsum("...ijkl->...iklj", R) + np.einsum("...ijkl->...iljk", R)
    assert np.max(np.abs(bianchi)) <= 1e-12
    # Levi-Civita: lowered tensor is antisymmetric in the first pair too
    Rlow = np.einsum("...ai,...ijkl->...ajkl", g.value(x), R)
    assert np.max(np.abs(Rlow + np.swapaxes(Rlow, -3, -4))) <= 1e-12
    assert ct.weyl_trace_defect() <= 1e-12


def test_weyl_against_symbolic_oracle():
    W = projective_weyl(LeviCivita(sin_metric3()), np.array([0.1, 0.2, -0.3]))
    ref = np.zeros((3, 3, 3, 3))
    for k, v in WEYL_SIN.items():
        ref[k] = v
    np.testing.assert_allclose(W, ref, atol=1e-14)


def test_weyl_vanishes_for_flat_reparametrized_metric():
    # 1 + 0.3 sin(x1) in the dx1^2 slot is a coordinate change of the flat metric
    x = ChartDomain.box(3, 0.5).sample(50, seed=4)
    assert np.max(np.abs(projective_weyl(LeviCivita(sin_metric3("x1")), x))) <= 1e-13


@pytest.mark.parametrize("g", [beltrami(3), klein(3), flat(3)], ids=["S3", "H3", "R3"])
def test_weyl_vanishes_on_projectively_flat_3d(g):
    x = ChartDomain.box(3, 0.5).sample(50, seed=5)
    assert np.max(np.abs(projective_weyl(LeviCivita(g), x))) <= 1e-7


def test_weyl_vanishes_identically_in_dimension_two():
    x = ChartDomain.box(2, 0.5).sample(50, seed=5)
    assert np.max(np.abs(projective_weyl(LeviCivita(perturbed2()), x))) <= 1e-12


FIVE_METRICS = [beltrami(2), beltrami(3), klein(2), perturbed2(), sin_metric3()]


@settings(max_examples=6)
@given(seed=st.integers(0, 2**31 - 1), which=st.integers(0, len(FIVE_METRICS) - 1))
def test_weyl_is_projectively_invariant(seed, which):
    g = FIVE_METRICS[which]
    n = g.dim
    rng = np.random.default_rng(seed)
    x = ChartDomain.box(n, 0.5).sample(50, seed=seed % 1000)
    conn = LeviCivita(g)
    eta = random_one_form(n, rng)
    W0 = projective_weyl(conn, x)
    W1 = projective_weyl(ProjectivelyShifted(conn, eta), x)
    assert np.max(np.abs(W1 - W0)) <= 1e-7


# --------------------------------------------------------------------------
# projective equivalence of connections

@settings(max_examples=20)
@given(seed=st.integers(0, 2**31 - 1))
def test_projective_diff_recovers_one_form(seed):
    rng = np.random.default_rng(seed)
    conn = LeviCivita(beltrami(2))
    eta = random_one_form(2, rng)
    x = ChartDomain.box(2, 0.5).sample(20, seed=seed % 97)
    d = projective_diff(conn, ProjectivelyShifted(conn, eta), x)
    assert d.success
    np.testing.assert_allclose(d.eta, eta.value(x), atol=1e-12)


def test_projective_diff_flat_vs_gnomonic_sphere():
    x = ChartDomain.box(2, 0.5).sample(30)
    d = projective_diff(FlatConnection(2), LeviCivita(beltrami(2)), x)
    assert d.success and d.residual <= 1e-14
    # the gnomonic chart's eta is d(-1/2 log(1 + |x|^2))
    q = 1 + np.sum(x * x, axis=-1)
    np.testing.assert_allclose(d.eta, -x / q[:, None], atol=1e-14)


def test_projective_diff_rejects_non_equivalent_pair():
    x = ChartDomain.box(2, 0.5).sample(30)
    d = projective_diff(FlatConnection(2), LeviCivita(ExprMetric(stereographic_sphere(2))), x)
    assert not d.success and d.residual > 1e-3


def test_projective_diff_dimension_mismatch():
    with pytest.raises(ValueError):
        projective_diff(FlatConnection(2), FlatConnection(3), np.zeros(2))


def test_expression_connection_symmetrizes_and_reports_torsion():
    G = [[["0", "x2"], ["0", "0"]], [["0", "0"], ["0", "0"]]]
    conn = ExprConnection(G, 2)
    x = np.array([0.1, 0.4])
    assert conn.torsion(x) == pytest.approx(0.4)
    Gs = conn.gamma(x)
    np.testing.assert_allclose(Gs[0], [[0, 0.2], [0.2, 0]])


def test_one_form_from_jet_callable():
    eta = OneForm(jet=lambda x: (np.asarray(x) * 2.0, np.broadcast_to(2 * np.eye(2), np.shape(x) + (2,))), dim=2)
    np.testing.assert_array_equal(eta.value(P), 2 * P)
