import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from projlab.exprcore import DomainError
from projlab.geom import ChartDomain, FlatConnection, LeviCivita
from projlab.projfield import (ClosedFormFlow, ExprVectorField, NormalFormField, NumericFlow, flow_closed,
                               is_projective, lift_to_sl, linearizable, radial_rate, reduce_ker)

from conftest import beltrami, klein

small = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def normal_forms(n=2):
    return st.tuples(arrays(float, (n, n), elements=small), arrays(float, (n,), elements=small)).map(
        lambda t: NormalFormField(*t))


def rot(n, i, j, theta=1.0):
    A = np.zeros((n, n))
    A[j, i], A[i, j] = theta, -theta
    return A


NONLIN = NormalFormField(np.zeros((2, 2)), [-1.0, 0.0])
FLAT_MODEL = NormalFormField(rot(3, 1, 2), [-1.0, 0.0, 0.0])


# --------------------------------------------------------------------------
# fields and lifts

def test_normal_form_field_values():
    X = NormalFormField([[0.0, 1.0], [2.0, 0.0]], [1.0, -1.0])
    x = np.array([0.3, 0.5])
    np.testing.assert_allclose(X(x), [0.5, 0.6] + (0.3 - 0.5) * x, atol=1e-15)


@settings(max_examples=30)
@given(normal_forms(3))
def test_normal_form_jets_against_finite_differences(nf):
    x = np.array([0.2, -0.1, 0.3])
    _, dX, ddX = nf.jet2(x)
    h = 1e-6
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        np.testing.assert_allclose(dX[:, c], (nf(x + e) - nf(x - e)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(ddX[:, :, c], (nf.jet2(x + e)[1] - nf.jet2(x - e)[1]) / (2 * h), atol=1e-8)


@settings(max_examples=30)
@given(normal_forms(3))
def test_lift_is_trace_free_and_induces_field(nf):
    lift = lift_to_sl(nf)
    assert abs(np.trace(lift.M)) <= 1e-14
    x = np.random.default_rng(0).uniform(-1, 1, (10, 3))
    np.testing.assert_allclose(lift.induced_field(x), nf(x), atol=1e-14)


def test_normal_form_field_validation_and_hashing():
    with pytest.raises(ValueError):
        NormalFormField(np.zeros((2, 3)), [0, 0])
    a = NormalFormField(np.eye(2), [1.0, 0.0])
    assert a == NormalFormField(np.eye(2), [1.0, 0.0]) and hash(a) == hash(NormalFormField(np.eye(2), [1.0, 0.0]))
    assert a != NormalFormField(np.eye(2), [0.0, 1.0])


# --------------------------------------------------------------------------
# flows

@settings(max_examples=25)
@given(normal_forms(2), st.floats(-1, 1), st.floats(-1, 1))
def test_closed_flow_group_law(nf, s, t):
    F = ClosedFormFlow(nf)
    x = np.array([[0.1, -0.2], [0.05, 0.1]])
    if not (np.all(F.valid(t, x, 1e-3)) and np.all(F.valid(s + t, x, 1e-3))
            and np.all(F.valid(s, F.apply(t, x), 1e-3))):
        return
    np.testing.assert_allclose(F.apply(s, F.apply(t, x)), F.apply(s + t, x), rtol=1e-9, atol=1e-10)


def test_closed_flow_derivative_in_time_is_the_field():
    F = ClosedFormFlow(FLAT_MODEL)
    x = ChartDomain.box(3, 0.5).sample(10)
    h = 1e-5
    for t in (-0.7, 0.0, 0.6):
        d = (F.apply(t + h, x) - F.apply(t - h, x)) / (2 * h)
        np.testing.assert_allclose(d, FLAT_MODEL(F.apply(t, x)), atol=1e-8)


@pytest.mark.parametrize("nf", [NONLIN, FLAT_MODEL, NormalFormField([[0.3, -1.0], [0.5, 0.2]], [0.4, -0.7])])
def test_analytic_jacobian_and_hessian(nf):
    F = ClosedFormFlow(nf)
    n = nf.dim
    x = np.full(n, 0.15)
    h = 1e-5
    for t in (-0.8, 0.5, 1.0):
        J, H = F.jacobian(t, x), F.hessian(t, x)
        for c in range(n):
            e = np.zeros(n)
            e[c] = h
            np.testing.assert_allclose(J[:, c], (F.apply(t, x + e) - F.apply(t, x - e)) / (2 * h), atol=1e-9)
            np.testing.assert_allclose(H[:, :, c], (F.jacobian(t, x + e) - F.jacobian(t, x - e)) / (2 * h),
                                       atol=1e-8)


def test_flat_model_flow_matches_rational_formula():
    F = ClosedFormFlow(FLAT_MODEL)
    x = ChartDomain.box(3, 0.5).sample(50, seed=2)
    for t in np.linspace(-1, 1, 9):
        ref = (x @ scipy.linalg.expm(t * FLAT_MODEL.A).T) / (1 + t * x[:, :1])
        np.testing.assert_allclose(F.apply(t, x), ref, atol=1e-14)
        np.testing.assert_allclose(flow_closed(lift_to_sl(FLAT_MODEL), t, x), ref, atol=1e-14)


@settings(max_examples=10)
@given(normal_forms(2))
def test_closed_flow_matches_numeric_integration(nf):
    F, N = ClosedFormFlow(nf), NumericFlow(nf)
    x = ChartDomain.box(2, 0.3).sample(8, seed=1)
    for t in (-1.0, -0.3, 0.4, 1.0):
        if not np.all(F.valid(t, x, 0.2)):
            continue
        np.testing.assert_allclose(F.apply(t, x), N.apply(t, x), atol=1e-6)


def test_flow_leaving_chart_raises_domain_error_with_point():
    F = ClosedFormFlow(NONLIN)  # phi^t(x) = x/(1 + t x1)
    x = np.array([[0.2, 0.0], [-1.0, 0.5]])
    with pytest.raises(DomainError) as ei:
        F.apply(1.0, x)
    assert ei.value.point == [-1.0, 0.5]
    assert list(F.valid(1.0, x)) == [True, False]


def test_numeric_flow_for_expression_field():
    Xe = ExprVectorField(["-x1*x1", "-x1*x2"])
    x = np.array([0.3, -0.2])
    np.testing.assert_allclose(NumericFlow(Xe).apply(0.7, x), x / (1 + 0.7 * 0.3), atol=1e-10)


# --------------------------------------------------------------------------
# linearizability

@pytest.mark.parametrize("A, w, expected", [
    (np.zeros((2, 2)), [-1.0, 0.0], False),
    (np.eye(2), [0.3, 0.4], True),
    (rot(3, 1, 2), [-1.0, 0.0, 0.0], False),
    (rot(3, 1, 2), [0.0, 1.0, 2.0], True),
    (np.zeros((2, 2)), [0.0, 0.0], True),
])
def test_linearizability_criterion(A, w, expected):
    cert = linearizable(NormalFormField(A, w))
    assert cert.linearizable is expected
    if expected:
        np.testing.assert_allclose(np.asarray(A).T @ cert.z, w, atol=1e-12)


@settings(max_examples=40)
@given(normal_forms(3))
def test_reduce_ker_is_idempotent_and_conjugates_flows(nf):
    red = reduce_ker(nf, return_map=True)
    again = reduce_ker(red.field)
    np.testing.assert_allclose(again.w, red.field.w, atol=1e-12)
    np.testing.assert_array_equal(again.A, red.field.A)
    F0, F1 = ClosedFormFlow(nf), ClosedFormFlow(red.field)
    x = np.array([[0.05, -0.04, 0.03], [0.02, 0.01, -0.05]])
    y = red.chart_map(x)
    np.testing.assert_allclose(red.chart_map_inv(y), x, atol=1e-14)
    t = 0.1
    if np.all(F0.valid(t, x, 0.1)) and np.all(F1.valid(t, y, 0.1)):
        np.testing.assert_allclose(red.chart_map(F0.apply(t, x)), F1.apply(t, y), atol=1e-10)


def test_radial_rate_of_non_linearizable_field():
    F = ClosedFormFlow(FLAT_MODEL)
    a, defect = radial_rate(F, np.array([1.0, 0.0, 0.0]), [-0.3, -0.1, 0.2, 0.4], [-0.5, 0.5, 1.0])
    assert a == pytest.approx(1.0, abs=1e-12) and defect <= 1e-13


def test_linearizable_field_has_linear_jacobian_at_origin():
    nf = NormalFormField(rot(3, 1, 2) + np.diag([0.5, 0, 0]), [0.2, 0.0, 0.0])
    red = reduce_ker(nf)
    assert np.allclose(red.w, 0.0)
    F = ClosedFormFlow(red)
    for t in (-1.0, 0.5):
        np.testing.assert_allclose(F.jacobian(t, np.zeros(3)), scipy.linalg.expm(t * nf.A), atol=1e-12)


# --------------------------------------------------------------------------
# projectivity

def test_normal_form_fields_are_projective_for_flat_connection():
    x = ChartDomain.box(3, 0.5).sample(30)
    r = is_projective(FLAT_MODEL, FlatConnection(3), x)
    assert r.projective and not r.affine


@pytest.mark.parametrize("metric", [beltrami(2), klein(2)], ids=["S2", "H2"])
def test_normal_form_fields_are_projective_for_quadrics(metric):
    x = ChartDomain.box(2, 0.5).sample(30)
    conn = LeviCivita(metric)
    assert is_projective(NONLIN, conn, x).projective
    r = is_projective(NormalFormField(rot(2, 0, 1), [0.0, 0.0]), conn, x)
    assert r.projective and r.affine  # rotations are isometries


def test_euler_field_is_affine_for_flat_connection():
    r = is_projective(NormalFormField(np.eye(2), [0.0, 0.0]), FlatConnection(2), np.zeros((1, 2)))
    assert r.affine and r.affine_residual == 0.0


def test_non_projective_expression_field():
    x = ChartDomain.box(2, 0.5).sample(30)
    r = is_projective(ExprVectorField(["x2", "x1^2"]), FlatConnection(2), x)
    assert not r.projective and r.trace_free_residual > 0.1
    assert r.per_point.shape == (30, 2)
