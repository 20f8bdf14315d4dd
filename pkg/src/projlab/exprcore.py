"""Expression language for chart component functions.

Sources are parsed into an immutable tree of frozen dataclasses and evaluated
with second-order forward-mode jets (value, gradient, Hessian).  Evaluation is
vectorized: ``x`` may be a single point of shape ``(n,)`` or a batch of shape
``(..., n)``.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

``x1 .. xn`` are chart coordinates; any other identifier is a parameter or
(when followed by a parenthesis) a function.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Iterable

import numpy as np

__all__ = [
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "VariableIndexError", "DomainError", "UnboundParameterError",
    "Num", "Var", "Param", "Neg", "BinOp", "Call", "Expr",
    "Jet2", "parse_expr", "to_source", "eval_jet2", "evaluate",
    "free_params", "depends_on_x", "FUNCTIONS",
]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "pow": 2, "abs": 1}
ABS_EPS = 1e-12


class ExprError(ValueError):
    """Base class for parse and evaluation errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class UnknownIdentifierError(ExprSyntaxError):
    pass


class VariableIndexError(ExprSyntaxError):
    pass


class DomainError(ExprError):
    """Raised when an expression is evaluated outside its function domain.

    ``point`` holds an offending chart point when one can be identified.
    """

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = None if point is None else np.asarray(point, dtype=float).tolist()


class UnboundParameterError(ExprError):
    pass


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based chart coordinate


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    child: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Num | Var | Param | Neg | BinOp | Call


# --------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"x(\d+)$")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        else:
            for i, ch in enumerate(text):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source: str, dim: int, params: Iterable[str]):
        self.toks = _tokenize(source)
        self.i = 0
        self.dim = dim
        self.params = frozenset(params)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _err(self, msg, tok=None, cls=ExprSyntaxError):
        tok = tok or self.tok
        return cls(msg, tok.line, tok.col)

    def expect(self, text):
        if self.tok.text != text or self.tok.kind not in ("op",):
            raise self._err(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        self.i += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            raise self._err(f"unexpected {self.tok.text!r}")
        return e

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            return Neg(self.factor())
        node = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.i += 1
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            self.i += 1
            nxt = self.tok
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in FUNCTIONS:
                    raise self._err(f"unknown function {tok.text!r}", tok, UnknownIdentifierError)
                self.i += 1
                args = [self.expr()]
                while self.tok.kind == "op" and self.tok.text == ",":
                    self.i += 1
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[tok.text]:
                    raise self._err(
                        f"{tok.text} takes {FUNCTIONS[tok.text]} argument(s), got {len(args)}", tok)
                return Call(tok.text, tuple(args))
            m = _VAR_RE.match(tok.text)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.dim:
                    raise self._err(
                        f"variable index out of range: {tok.text} (dim={self.dim})", tok, VariableIndexError)
                return Var(k)
            if tok.text in self.params:
                return Param(tok.text)
            raise self._err(f"unknown identifier {tok.text!r}", tok, UnknownIdentifierError)
        raise self._err(f"unexpected {tok.text or 'end of input'!r}")


def parse_expr(source: str, dim: int, params: Iterable[str] = ()) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises :class:`ExprSyntaxError` (or a subclass) carrying the line and
    column of the offending token.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    return _Parser(source, dim, params).parse()


# --------------------------------------------------------------------------
# Printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 4


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(e: Expr) -> str:
    """Print ``e`` with the minimal parentheses that re-parse to the same tree."""

    def wrap(child, min_prec):
        s = to_source(child)
        return s if _prec(child) >= min_prec else f"({s})"

    match e:
        case Num(v):
            return _fmt_num(v)
        case Var(k):
            return f"x{k}"
        case Param(name):
            return name
        case Neg(c):
            return "-" + wrap(c, 3)
        case Call(fn, args):
            return f"{fn}({', '.join(to_source(a) for a in args)})"
        case BinOp("^", l, r):
            return f"{wrap(l, 4)}^{wrap(r, 3)}"
        case BinOp(op, l, r):
            p = _PREC[op]
            return f"{wrap(l, p)} {op} {wrap(r, p + 1)}"
    raise TypeError(f"not an expression: {e!r}")


def free_params(e: Expr) -> set[str]:
    match e:
        case Param(name):
            return {name}
        case Neg(c):
            return free_params(c)
        case BinOp(_, l, r):
            return free_params(l) | free_params(r)
        case Call(_, args):
            return set().union(*(free_params(a) for a in args))
    return set()


def depends_on_x(e: Expr) -> bool:
    match e:
        case Var():
            return True
        case Neg(c):
            return depends_on_x(c)
        case BinOp(_, l, r):
            return depends_on_x(l) or depends_on_x(r)
        case Call(_, args):
            return any(depends_on_x(a) for a in args)
    return False


# --------------------------------------------------------------------------
# Second-order jets

class Jet2:
    """Value, gradient and Hessian of a scalar function, batched over points.

    ``val`` has shape ``S``, ``grad`` shape ``S + (n,)`` and ``hess`` shape
    ``S + (n, n)``.  Every operation preserves exact Hessian symmetry.
    """

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, c, shape, n):
        return cls(np.full(shape, float(c)), np.zeros(shape + (n,)), np.zeros(shape + (n, n)))

    @classmethod
    def variable(cls, x, k):
        """Jet of coordinate ``k`` (0-based) at points ``x``."""
        shape, n = x.shape[:-1], x.shape[-1]
        grad = np.zeros(shape + (n,))
        grad[..., k] = 1.0
        return cls(x[..., k].copy(), grad, np.zeros(shape + (n, n)))

    @property
    def n(self):
        return self.grad.shape[-1]

    def __add__(self, o):
        return Jet2(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    def __sub__(self, o):
        return Jet2(self.val - o.val, self.grad - o.grad, self.hess - o.hess)

    def __neg__(self):
        return Jet2(-self.val, -self.grad, -self.hess)

    def __mul__(self, o):
        a, b = self, o
        outer = a.grad[..., :, None] * b.grad[..., None, :]
        hess = a.hess * b.val[..., None, None] + b.hess * a.val[..., None, None] + outer + np.swapaxes(outer, -1, -2)
        return Jet2(a.val * b.val, a.grad * b.val[..., None] + b.grad * a.val[..., None], hess)

    def apply(self, f0, f1, f2):
        """Chain rule for a scalar function with value/first/second derivative arrays."""
        g = self.grad
        hess = f1[..., None, None] * self.hess + f2[..., None, None] * (g[..., :, None] * g[..., None, :])
        return Jet2(f0, f1[..., None] * g, hess)

    def __truediv__(self, o):
        return self * o.reciprocal()

    def reciprocal(self):
        u = self.val
        if np.any(u == 0.0):
            raise DomainError("division by zero")
        r = 1.0 / u
        return self.apply(r, -r * r, 2.0 * r * r * r)

    def __repr__(self):
        return f"Jet2(val={self.val!r}, grad={self.grad!r}, hess={self.hess!r})"


def _bad_point(mask, x):
    if x is None:
        return None
    idx = np.argwhere(np.atleast_1d(mask))
    if x.ndim == 1:
        return x
    return x[tuple(idx[0])] if len(idx) else None


def _power_const(u: Jet2, c: float, x) -> Jet2:
    v = u.val
    if c.is_integer() and c >= 0:
        if c == 0:
            return Jet2.constant(1.0, v.shape, u.n)
        if c == 1:
            return u
        if c == 2:
            return u.apply(v * v, 2.0 * v, np.full_like(v, 2.0))
        return u.apply(v ** c, c * v ** (c - 1), c * (c - 1) * v ** (c - 2))
    if not float(c).is_integer():
        bad = v <= 0.0 if c < 1 else v < 0.0
        if np.any(bad):
            raise DomainError(f"non-integer power {c} of non-positive base", _bad_point(bad, x))
    elif c < 0 and np.any(v == 0.0):
        raise DomainError("negative power of zero", _bad_point(v == 0.0, x))
    with np.errstate(divide="ignore", invalid="ignore"):
        f0 = np.power(v, c)
        f1 = c * np.power(v, c - 1) if c != 0 else np.zeros_like(v)
        f2 = c * (c - 1) * np.power(v, c - 2) if c not in (0.0, 1.0) else np.zeros_like(v)
    return u.apply(f0, f1, f2)


def _call(fn: str, args: list[Jet2], x) -> Jet2:
    if fn == "pow":
        raise AssertionError("pow handled by caller")
    u = args[0]
    v = u.val
    if fn == "sin":
        s, c = np.sin(v), np.cos(v)
        return u.apply(s, c, -s)
    if fn == "cos":
        s, c = np.sin(v), np.cos(v)
        return u.apply(c, -s, -c)
    if fn == "exp":
        e = np.exp(v)
        return u.apply(e, e, e)
    if fn == "log":
        if np.any(v <= 0.0):
            raise DomainError("log of non-positive argument", _bad_point(v <= 0.0, x))
        r = 1.0 / v
        return u.apply(np.log(v), r, -r * r)
    if fn == "sqrt":
        if np.any(v <= 0.0):
            raise DomainError("sqrt of non-positive argument", _bad_point(v <= 0.0, x))
        s = np.sqrt(v)
        return u.apply(s, 0.5 / s, -0.25 / (s * v))
    if fn == "abs":
        small = np.abs(v) < ABS_EPS
        if np.any(small):
            raise DomainError("abs is not differentiable at 0", _bad_point(small, x))
        sg = np.sign(v)
        return u.apply(np.abs(v), sg, np.zeros_like(v))
    raise ExprError(f"unknown function {fn!r}")


def _jet(e: Expr, x: np.ndarray, params: Mapping[str, float]) -> Jet2:
    shape, n = x.shape[:-1], x.shape[-1]
    match e:
        case Num(v):
            return Jet2.constant(v, shape, n)
        case Var(k):
            if k > n:
                raise ExprError(f"x{k} used with a {n}-dimensional point")
            return Jet2.variable(x, k - 1)
        case Param(name):
            if name not in params:
                raise UnboundParameterError(f"parameter {name!r} is not bound")
            return Jet2.constant(params[name], shape, n)
        case Neg(c):
            return -_jet(c, x, params)
        case BinOp("^", l, r):
            return _pow(_jet(l, x, params), r, x, params)
        case BinOp(op, l, r):
            a, b = _jet(l, x, params), _jet(r, x, params)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if b.val.size and np.any(b.val == 0.0):
                raise DomainError("division by zero", _bad_point(b.val == 0.0, x))
            return a / b
        case Call("pow", (base, expo)):
            return _pow(_jet(base, x, params), expo, x, params)
        case Call(fn, args):
            return _call(fn, [_jet(a, x, params) for a in args], x)
    raise TypeError(f"not an expression: {e!r}")


def _pow(base: Jet2, expo: Expr, x, params) -> Jet2:
    if isinstance(expo, Num):
        return _power_const(base, expo.value, x)
    if isinstance(expo, Neg) and isinstance(expo.child, Num):
        return _power_const(base, -expo.child.value, x)
    ej = _jet(expo, x, params)
    if not depends_on_x(expo):
        c = np.unique(ej.val)
        if c.size == 1:
            return _power_const(base, float(c[0]), x)
    # variable exponent: u^v = exp(v log u)
    if np.any(base.val <= 0.0):
        raise DomainError("variable power of non-positive base", _bad_point(base.val <= 0.0, x))
    r = 1.0 / base.val
    logu = base.apply(np.log(base.val), r, -r * r)
    return _call("exp", [ej * logu], x)


def eval_jet2(e: Expr, x, param_values: Mapping[str, float] | None = None) -> Jet2:
    """Evaluate ``e`` and its first two derivatives at ``x``.

    Parameters
    ----------
    e : Expr
        Parsed expression.
    x : array_like, shape ``(n,)`` or ``(..., n)``
        Chart point(s).
    param_values : mapping, optional
        Values for every parameter occurring in ``e``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ValueError("x must have a coordinate axis")
    return _jet(e, x, param_values or {})


def evaluate(e: Expr, x, param_values: Mapping[str, float] | None = None) -> np.ndarray:
    """Value of ``e`` at ``x`` (same batching rules as :func:`eval_jet2`)."""
    return eval_jet2(e, x, param_values).val
