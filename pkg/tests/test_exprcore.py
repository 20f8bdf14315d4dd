import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from projlab.exprcore import (BinOp, Call, DomainError, ExprSyntaxError, Neg, Num, Param, UnboundParameterError,
                              UnknownIdentifierError, Var, VariableIndexError, depends_on_x, eval_jet2, evaluate,
                              free_params, parse_expr, to_source)


# --------------------------------------------------------------------------
# parsing

@pytest.mark.parametrize("src, value", [
    ("1 + 2*3", 7.0),
    ("(1 + 2)*3", 9.0),
    ("2^3^2", 512.0),          # right associative
    ("-2^2", -4.0),            # unary minus binds looser than ^
    ("2^-1", 0.5),
    ("8/4/2", 1.0),            # left associative
    ("1 - 2 - 3", -4.0),
    ("pow(2, 10)", 1024.0),
    ("sqrt(16) + abs(-3)", 7.0),
    ("exp(0) + log(1) + sin(0) + cos(0)", 2.0),
    ("1.5e2 + .5", 150.5),
])
def test_constant_expressions(src, value):
    assert evaluate(parse_expr(src, 1), np.zeros(1)) == pytest.approx(value, rel=1e-15)


def test_variables_and_parameters():
    e = parse_expr("k*x1 + x2^2", 2, params=["k"])
    assert free_params(e) == {"k"}
    assert depends_on_x(e)
    assert evaluate(e, np.array([2.0, 3.0]), {"k": 0.5}) == pytest.approx(10.0)
    with pytest.raises(UnboundParameterError):
        evaluate(e, np.array([2.0, 3.0]))


def test_constant_tree_does_not_depend_on_x():
    assert not depends_on_x(parse_expr("a*sin(2)", 3, ["a"]))


@pytest.mark.parametrize("src, cls, col", [
    ("x1 + ", ExprSyntaxError, 6),
    ("x1 + * x2", ExprSyntaxError, 6),
    ("(x1 + x2", ExprSyntaxError, 9),
    ("x1 $ x2", ExprSyntaxError, 4),
    ("foo(x1)", UnknownIdentifierError, 1),
    ("x1 + y", UnknownIdentifierError, 6),
    ("x3", VariableIndexError, 1),
    ("x0", VariableIndexError, 1),
    ("pow(x1)", ExprSyntaxError, 1),
    ("sin(x1, x2)", ExprSyntaxError, 1),
])
def test_syntax_errors_carry_position(src, cls, col):
    with pytest.raises(cls) as ei:
        parse_expr(src, 2)
    assert ei.value.line == 1
    assert ei.value.col == col


def test_error_position_on_later_line():
    with pytest.raises(ExprSyntaxError) as ei:
        parse_expr("x1 +\n  )", 1)
    assert (ei.value.line, ei.value.col) == (2, 3)


# --------------------------------------------------------------------------
# printing round trip

def _leaves(dim):
    nums = st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num)
    vars_ = st.integers(min_value=1, max_value=dim).map(Var)
    params = st.sampled_from(["a", "b"]).map(Param)
    return nums | vars_ | params


def _trees(dim=3):
    return st.recursive(
        _leaves(dim),
        lambda ch: st.one_of(
            ch.map(Neg),
            st.tuples(st.sampled_from("+-*/^"), ch, ch).map(lambda t: BinOp(*t)),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs"]), ch).map(
                lambda t: Call(t[0], (t[1],))),
            st.tuples(ch, ch).map(lambda t: Call("pow", t)),
        ),
        max_leaves=12,
    )


@settings(max_examples=400)
@given(_trees())
def test_print_parse_round_trip(tree):
    src = to_source(tree)
    assert parse_expr(src, 3, ["a", "b"]) == tree


@pytest.mark.parametrize("src", ["-(x1 - x2)", "(x1^x2)^x3", "x1/(x2*x3)", "-x1^2", "(-x1)^2", "x1 - (x2 + x3)"])
def test_minimal_parentheses_preserve_structure(src):
    e = parse_expr(src, 3)
    assert parse_expr(to_source(e), 3) == e


# --------------------------------------------------------------------------
# jets

def _random_poly(rng, n, deg=3, terms=5):
    out = []
    for _ in range(terms):
        c = rng.uniform(-2, 2)
        powers = rng.integers(0, deg + 1, size=n)
        mono = "*".join(f"x{i + 1}^{int(p)}" for i, p in enumerate(powers) if p) or "1"
        out.append(f"({c!r})*{mono}")
    return " + ".join(out)


def _fd_check(e, x, h=1e-4):
    J = eval_jet2(e, x)
    n = len(x)
    g_fd = np.empty(n)
    H_fd = np.empty((n, n))
    for i in range(n):
        d = np.zeros(n)
        d[i] = h
        g_fd[i] = (evaluate(e, x + d) - evaluate(e, x - d)) / (2 * h)
        H_fd[i] = (eval_jet2(e, x + d).grad - eval_jet2(e, x - d).grad) / (2 * h)
    return J, g_fd, H_fd


def test_polynomial_jets_against_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        e = parse_expr(_random_poly(rng, n), n)
        x = rng.uniform(-1, 1, size=n)
        J, g_fd, H_fd = _fd_check(e, x)
        scale = max(1.0, float(np.max(np.abs(J.grad))), float(np.max(np.abs(J.hess))))
        worst = max(worst, np.max(np.abs(J.grad - g_fd)) / scale, np.max(np.abs(J.hess - H_fd)) / scale)
    assert worst <= 1e-5


@pytest.mark.parametrize("src", [
    "sin(x1)*exp(x2)", "log(1 + x1^2 + x2^2)", "sqrt(2 + x1*x2)", "x1^x2", "pow(1 + x1^2, -1.5)",
    "abs(x1 - 3)", "cos(x1/(1 + x2^2))", "(1 + x1)^0.5 - 2^x2",
])
def test_transcendental_jets(src):
    e = parse_expr(src, 2)
    x = np.array([0.3, 0.7])
    J, g_fd, H_fd = _fd_check(e, x)
    np.testing.assert_allclose(J.grad, g_fd, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(J.hess, H_fd, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(J.hess, J.hess.T, atol=1e-14)


def test_closed_form_jets():
    # value, gradient and Hessian of x1^2 * x2 at (2, 3) are known exactly
    J = eval_jet2(parse_expr("x1^2*x2", 2), np.array([2.0, 3.0]))
    assert J.val == 12.0
    np.testing.assert_array_equal(J.grad, [12.0, 4.0])
    np.testing.assert_array_equal(J.hess, [[6.0, 4.0], [4.0, 0.0]])


def test_batched_evaluation_matches_pointwise():
    e = parse_expr("sin(x1)*x2 + x3^3", 3)
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(4, 5, 3))
    J = eval_jet2(e, X)
    assert J.val.shape == (4, 5) and J.grad.shape == (4, 5, 3) and J.hess.shape == (4, 5, 3, 3)
    for idx in [(0, 0), (3, 4), (2, 1)]:
        Jp = eval_jet2(e, X[idx])
        np.testing.assert_allclose(J.grad[idx], Jp.grad, rtol=1e-15)
        np.testing.assert_allclose(J.hess[idx], Jp.hess, rtol=1e-15)


@pytest.mark.parametrize("src, x", [
    ("log(x1)", [-1.0]),
    ("log(x1)", [0.0]),
    ("sqrt(x1 - 1)", [0.5]),
    ("1/x1", [0.0]),
    ("abs(x1)", [0.0]),
    ("x1^0.5", [-0.25]),
    ("x1^x1", [-1.0]),
])
def test_domain_errors_report_point(src, x):
    with pytest.raises(DomainError) as ei:
        eval_jet2(parse_expr(src, 1), np.array(x))
    assert ei.value.point == x


def test_domain_error_identifies_batch_member():
    X = np.array([[1.0, 2.0], [0.5, -1.0], [2.0, 2.0]])
    with pytest.raises(DomainError) as ei:
        evaluate(parse_expr("log(x2)", 2), X)
    assert ei.value.point == [0.5, -1.0]


@given(st.floats(min_value=0.1, max_value=10), st.floats(min_value=-3, max_value=3))
def test_power_rules(u, c):
    e = parse_expr(f"x1^({c!r})", 1)
    J = eval_jet2(e, np.array([u]))
    assert J.val == pytest.approx(u ** c, rel=1e-12)
    assert J.grad[0] == pytest.approx(c * u ** (c - 1), rel=1e-12, abs=1e-300)
    assert J.hess[0, 0] == pytest.approx(c * (c - 1) * u ** (c - 2), rel=1e-11, abs=1e-300)


def test_integer_powers_of_negative_base():
    J = eval_jet2(parse_expr("x1^3", 1), np.array([-2.0]))
    assert (J.val, J.grad[0], J.hess[0, 0]) == (-8.0, 12.0, -12.0)
    assert math.isclose(evaluate(parse_expr("x1^(-2)", 1), np.array([-2.0])), 0.25)
