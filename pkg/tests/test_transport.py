import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projlab.bm import ConstantTensor, GStrengthField, bm_residual, identity_field, mobility_estimate
from projlab.geodesic import integrate_geodesic
from projlab.geom import ChartDomain, FlatConnection, LeviCivita
from projlab.projfield import ClosedFormFlow, NormalFormField
from projlab.transport import (ComposedMap, FitError, MapAt, PullbackMetric, TransportedField, classify_matrix,
                               classify_mobius, compute_Kt, eta_t, group_law_residual, kt_field, lt_matrix,
                               match_spectra, mobius_apply, mobius_fixed, mobius_from_fixed_set, psi_tau_check,
                               spectral_transport_check, transport_K)

from conftest import beltrami, flat, lorentzian_quadric

CH2 = ChartDomain.box(2, 0.5)
NONLIN = ClosedFormFlow(NormalFormField(np.zeros((2, 2)), [-1.0, 0.0]))


def rot(n, i, j):
    A = np.zeros((n, n))
    A[j, i], A[i, j] = 1.0, -1.0
    return A


FLAT_MODEL = ClosedFormFlow(NormalFormField(rot(3, 1, 2), [-1.0, 0.0, 0.0]))

# Symbolic oracle (sympy): K_t for phi^t(x) = x/(1 + t x1) on the gnomonic sphere chart, t = 0.5, x = (0.2, 0.1)
KT_ORACLE = [[1.200952380952381, 0.05047619047619047], [0.05285714285714286, 1.0014285714285713]]


# --------------------------------------------------------------------------
# K_t and L_t pointwise

def test_kt_against_symbolic_oracle():
    np.testing.assert_allclose(compute_Kt(beltrami(2), NONLIN, 0.5, np.array([0.2, 0.1])), KT_ORACLE, atol=1e-14)


def test_kt_at_time_zero_and_at_origin():
    g = beltrami(2)
    x = CH2.sample(20)
    np.testing.assert_allclose(compute_Kt(g, NONLIN, 0.0, x), np.broadcast_to(np.eye(2), (20, 2, 2)), atol=1e-15)
    for t in (0.1, 0.5, 1.0):
        np.testing.assert_allclose(compute_Kt(g, NONLIN, t, np.zeros(2)), np.eye(2), atol=1e-14)


def test_kt_is_bm_structure():
    g = beltrami(2)
    assert bm_residual(g, kt_field(g, NONLIN, 0.5), CH2.sample(60, seed=4, shrink=0.8)) <= 1e-6


def test_transport_of_identity_is_kt_and_time_zero_is_identity_map():
    g = beltrami(2)
    x = CH2.sample(20, shrink=0.8)
    np.testing.assert_allclose(transport_K(g, NONLIN, 0.5, identity_field(2), x), compute_Kt(g, NONLIN, 0.5, x),
                               atol=1e-14)
    K = GStrengthField(g, flat(2))
    np.testing.assert_allclose(transport_K(g, NONLIN, 0.0, K, x), K.value(x), atol=1e-14)


@settings(max_examples=15)
@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
def test_pointwise_group_law(s, t):
    # L_{s+t}(K) = L_s(L_t(K)) evaluated at points
    g = beltrami(2)
    x = CH2.sample(10, seed=2, shrink=0.5)
    K = GStrengthField(g, flat(2))
    lhs = transport_K(g, NONLIN, s + t, K, x)
    rhs = transport_K(g, NONLIN, s, TransportedField(g, NONLIN, t, K), x)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-10)


def test_composed_map_cocycle():
    a, b, ab = MapAt(NONLIN, 0.3), MapAt(NONLIN, 0.2), MapAt(NONLIN, 0.5)
    c = ComposedMap(a, b)
    x = CH2.sample(10, shrink=0.6)
    np.testing.assert_allclose(c.apply(x), ab.apply(x), atol=1e-15)
    np.testing.assert_allclose(c.jacobian(x), ab.jacobian(x), atol=1e-14)
    np.testing.assert_allclose(c.hessian(x), ab.hessian(x), atol=1e-13)


def test_pullback_metric_by_isometry_is_unchanged():
    g = beltrami(2)
    rotation = ClosedFormFlow(NormalFormField(rot(2, 0, 1), [0.0, 0.0]))
    x = CH2.sample(10)
    np.testing.assert_allclose(PullbackMetric(g, rotation, 0.7).value(x), g.value(x), atol=1e-14)


def test_pullback_metric_derivative_matches_finite_difference():
    pg = PullbackMetric(beltrami(2), NONLIN, 0.5)
    x = np.array([0.1, -0.2])
    _, dg = pg.jet1(x)
    h = 1e-6
    for c in range(2):
        e = np.zeros(2)
        e[c] = h
        np.testing.assert_allclose(dg[..., c], (pg.value(x + e) - pg.value(x - e)) / (2 * h), atol=1e-8)


# --------------------------------------------------------------------------
# Moebius maps and classification

def test_mobius_apply_on_riemann_sphere():
    assert mobius_apply(2.0, -1.0, 1.0) == 1.0
    assert mobius_apply(2.0, -1.0, 0.0) == np.inf
    assert mobius_apply(2.0, -1.0, np.inf) == 2.0
    assert mobius_apply(2.0, -1.0, 0.5) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        mobius_apply(0.0, 0.0, 1.0)


@pytest.mark.parametrize("spec, ab, cls", [
    ([1.0, 1.0], (2.0, -1.0), "parabolic"),
    ([1.0], (2.0, -1.0), "parabolic"),
    ([1.0, 3.0], (4.0, -3.0), "hyperbolic"),
    ([1 + 1j, 1 - 1j], (2.0, -2.0), "elliptic"),
    ([1.0, 2.0, 3.0], None, None),
])
def test_mobius_from_fixed_set(spec, ab, cls):
    got = mobius_from_fixed_set(spec)
    assert got == (pytest.approx(ab) if ab else None)
    if ab:
        assert classify_mobius(*got) == cls
        fixed = mobius_fixed(*got)
        for z in fixed:
            assert mobius_apply(*got, z) == pytest.approx(z)


@pytest.mark.parametrize("L, cls", [
    (np.eye(3) * 2.0, "trivial"),
    ([[2.0, 1.0], [-1.0, 0.0]], "parabolic"),
    ([[3.0, 1.0], [0.0, 1.0]], "hyperbolic"),
    ([[0.0, -1.0], [1.0, 0.0]], "elliptic"),
])
def test_classify_matrix(L, cls):
    assert classify_matrix(L) == cls


def test_match_spectra_is_permutation_invariant():
    assert match_spectra([1.0, 2.0, 3j], [3j, 1.0, 2.0]) == 0.0
    assert match_spectra([1.0, 2.0], [1.0, 2.5]) == pytest.approx(0.5)


# --------------------------------------------------------------------------
# L_t on bases

def test_trivial_flow_has_trivial_lt():
    g = beltrami(2)
    rotation = ClosedFormFlow(NormalFormField(rot(2, 0, 1), [0.0, 0.0]))
    rec = lt_matrix(g, rotation, 0.5, CH2.sample(60))
    assert rec.classification == "trivial" and rec.fixes_identity_line and rec.alpha is None
    np.testing.assert_allclose(rec.matrix, [[1.0]], atol=1e-12)


def test_lorentzian_pair_is_invariant_and_parabolic():
    g = lorentzian_quadric()
    ch = ChartDomain.box(2, 0.3)
    rec = lt_matrix(g, NONLIN, 0.5, ch.sample(80))
    assert rec.mobius_source == "pair" and rec.fit_residual <= 1e-10
    assert rec.alpha == pytest.approx(2.0, abs=1e-8) and rec.beta == pytest.approx(-1.0, abs=1e-8)
    assert rec.classification == "parabolic" and not rec.fixes_identity_line
    d = rec.to_dict()
    assert d["mobius_fixed_points"] == [pytest.approx(1.0), pytest.approx(1.0)]


def test_riemannian_pair_is_not_invariant():
    with pytest.raises(FitError, match="not invariant"):
        lt_matrix(beltrami(2), NONLIN, 0.5, CH2.sample(80))


def test_full_mobility_basis_gives_parabolic_group():
    g = beltrami(2)
    basis = mobility_estimate(g, CH2, 6).basis_fields()
    pts = CH2.sample(80, seed=3, shrink=0.8)
    rec = lt_matrix(g, NONLIN, 0.5, pts, basis)
    assert rec.mobius_source == "fixed-set" and rec.classification == "parabolic"
    assert (rec.alpha, rec.beta) == (pytest.approx(2.0), pytest.approx(-1.0))
    assert not rec.fixes_identity_line
    assert group_law_residual(g, NONLIN, 0.3, 0.2, basis, pts) <= 1e-6


def test_flat_model_mobius_class_differs_from_full_matrix_class():
    g = flat(3)
    ch = ChartDomain.box(3, 0.5)
    basis = mobility_estimate(g, ch, 2).basis_fields()
    rec = lt_matrix(g, FLAT_MODEL, 0.5, ch.sample(80, shrink=0.8), basis)
    assert rec.classification == "parabolic" and rec.matrix_classification == "elliptic"


def test_lt_matrix_needs_enough_points():
    with pytest.raises(ValueError):
        lt_matrix(beltrami(2), NONLIN, 0.5, CH2.sample(10))


def test_dependent_basis_is_rejected():
    with pytest.raises(FitError, match="dependent"):
        lt_matrix(beltrami(2), NONLIN, 0.5, CH2.sample(60), [identity_field(2), ConstantTensor(2 * np.eye(2))])


# --------------------------------------------------------------------------
# spectra

def test_spectral_transport_on_lorentzian_pair_with_negative_control():
    g = lorentzian_quadric()
    pts = ChartDomain.box(2, 0.3).sample(100, seed=1)
    r = spectral_transport_check(g, NONLIN, 0.5, 2.0, -1.0, pts)
    assert r.passed and r.max_dist <= 1e-5 and r.origin_invariance <= 1e-12
    neg = spectral_transport_check(g, NONLIN, 0.5, 2.0, -1.0, pts, compare_t=1.0)
    assert not neg.passed and neg.max_dist > 1e-3


def test_spectral_transport_requires_mobius_map():
    with pytest.raises(ValueError):
        spectral_transport_check(beltrami(2), NONLIN, 0.5, None, None, CH2.sample(5))


# --------------------------------------------------------------------------
# psi-tau identity and eta_t

def test_psi_tau_on_flat_model():
    c = integrate_geodesic(FlatConnection(3), np.zeros(3), [1.0, 0.0, 0.0], (-0.4, 0.4), ChartDomain.box(3, 0.5))
    for t0 in (0.25, 0.5):
        r = psi_tau_check(flat(3), FLAT_MODEL, t0, c)
        assert r.passed and r.sup_err <= 1e-4
        # tau(s) = s/(1 + t0 s): d/ds log tau'(0) = -2 t0
        assert r.dlog_dtau_at_0 == pytest.approx(-2 * t0, abs=1e-6)


def test_psi_tau_on_gnomonic_sphere():
    g = beltrami(2)
    c = integrate_geodesic(LeviCivita(g), np.zeros(2), [1.0, 0.0], (-0.4, 0.4), CH2)
    r = psi_tau_check(g, NONLIN, 0.5, c)
    assert r.passed


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_eta_t_at_origin_is_nonzero(t):
    e = eta_t(beltrami(2), NONLIN, t)
    assert np.linalg.norm(e) > 1e-3
    np.testing.assert_allclose(e, [-t, 0.0], atol=1e-9)


def test_eta_t_vanishes_for_isometries():
    rotation = ClosedFormFlow(NormalFormField(rot(2, 0, 1), [0.0, 0.0]))
    assert np.linalg.norm(eta_t(beltrami(2), rotation, 0.5, np.array([0.1, 0.2]))) <= 1e-12
