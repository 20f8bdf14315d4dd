"""Projective vector fields in normal form and their exact flows.

A normal-form field is ``X(x) = A x + <w, x> x``.  It is the chart image of a
trace-free matrix ``M`` acting on homogeneous coordinates ``(1, x)``, so its
flow is ``x -> dehom(expm(t M) (1, x))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Mapping

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .exprcore import DomainError, eval_jet2, parse_expr
from .geom import Connection

RANK_RTOL = 1e-10
DENOM_TOL = 1e-12


# --------------------------------------------------------------------------
# Vector fields

class VectorField:
    """Field with second-order jets: ``X[...,k]``, ``dX[...,k,i]``, ``ddX[...,k,i,j]``."""

    dim: int

    def jet2(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.jet2(x)[0]


@dataclass(frozen=True)
class NormalFormField(VectorField):
    A: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        w = np.array(self.w, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or w.shape != (A.shape[0],):
            raise ValueError("A must be n x n and w an n-vector")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def jet2(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        I = np.eye(n)
        wx = x @ self.w
        X = x @ self.A.T + wx[..., None] * x
        dX = self.A + np.einsum("...k,i->...ki", x, self.w) + wx[..., None, None] * I
        ddX = np.einsum("j,ki->kij", self.w, I) + np.einsum("i,kj->kij", self.w, I)
        ddX = np.broadcast_to(ddX, x.shape[:-1] + (n, n, n)).copy()
        return X, dX, ddX

    def __hash__(self):
        return hash((self.A.tobytes(), self.w.tobytes()))

    def __eq__(self, other):
        return (isinstance(other, NormalFormField) and np.array_equal(self.A, other.A)
                and np.array_equal(self.w, other.w))


class ExprVectorField(VectorField):
    """General field with expression components."""

    def __init__(self, components: Sequence[str], dim: int | None = None,
                 params: Mapping[str, float] | None = None):
        n = dim or len(components)
        if len(components) != n:
            raise ValueError(f"expected {n} components")
        self.dim = n
        self.params = dict(params or {})
        self.exprs = [c if not isinstance(c, str) else parse_expr(c, n, self.params) for c in components]

    def jet2(self, x):
        js = [eval_jet2(e, np.asarray(x, dtype=float), self.params) for e in self.exprs]
        return (np.stack([j.val for j in js], -1), np.stack([j.grad for j in js], -2),
                np.stack([j.hess for j in js], -3))


# --------------------------------------------------------------------------
# Lift and exact flows

@dataclass(frozen=True)
class SlLift:
    """Trace-free ``(n+1) x (n+1)`` matrix ``[[a, v^T], [0, B]]``."""

    M: np.ndarray

    @property
    def dim(self) -> int:
        return self.M.shape[0] - 1

    def induced_field(self, x) -> np.ndarray:
        """Chart field ``(B - a I) x - (v.x) x`` generated by ``M``."""
        x = np.asarray(x, dtype=float)
        a, v, B = self.M[0, 0], self.M[0, 1:], self.M[1:, 1:]
        return x @ (B - a * np.eye(self.dim)).T - (x @ v)[..., None] * x


def lift_to_sl(nf: NormalFormField, check_points: int = 20, seed: int = 0) -> SlLift:
    n = nf.dim
    a = -np.trace(nf.A) / (n + 1)
    M = np.zeros((n + 1, n + 1))
    M[0, 0] = a
    M[0, 1:] = -nf.w
    M[1:, 1:] = nf.A + a * np.eye(n)
    lift = SlLift(M)
    assert abs(np.trace(M)) <= 1e-12 * max(1.0, np.abs(M).max())
    pts = np.random.default_rng(seed).uniform(-1, 1, (check_points, n))
    err = np.max(np.abs(lift.induced_field(pts) - nf(pts)))
    assert err <= 1e-12 * max(1.0, np.abs(M).max()), f"lift mismatch {err}"
    return lift


class FlowMap:
    dim: int

    def apply(self, t: float, x) -> np.ndarray:
        raise NotImplementedError


class ClosedFormFlow(FlowMap):
    """Exact flow of a normal-form field via the matrix exponential of its lift.

    ``jacobian`` and ``hessian`` are analytic (quotient rule on the
    homogeneous image), ``J[..., k, j] = d y_k / d x_j`` and
    ``H[..., k, i, j] = d^2 y_k / d x_i d x_j``.
    """

    def __init__(self, lift: SlLift | NormalFormField):
        if isinstance(lift, NormalFormField):
            self.field = lift
            lift = lift_to_sl(lift)
        else:
            self.field = None
        self.lift = lift
        self.dim = lift.dim
        self._cache: dict = {}

    def expm(self, t: float) -> np.ndarray:
        t = float(t)
        E = self._cache.get(t)
        if E is None:
            E = expm(t * self.lift.M)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[t] = E
        return E

    def denominator(self, t, x) -> np.ndarray:
        E = self.expm(t)
        return E[0, 0] + np.asarray(x, dtype=float) @ E[0, 1:]

    def valid(self, t, x, margin: float = DENOM_TOL) -> np.ndarray:
        return np.abs(self.denominator(t, x)) > margin

    def _hom(self, t, x):
        x = np.asarray(x, dtype=float)
        E = self.expm(t)
        Y0 = E[0, 0] + x @ E[0, 1:]
        bad = np.abs(Y0) <= DENOM_TOL
        if np.any(bad):
            pt = x if x.ndim == 1 else x[np.argwhere(np.atleast_1d(bad))[0][0]]
            raise DomainError(f"point leaves the chart under the flow at t={t}", pt)
        Yr = E[1:, 0] + x @ E[1:, 1:].T
        return E, Y0, Yr / Y0[..., None]

    def apply(self, t, x):
        return self._hom(t, x)[2]

    def jacobian(self, t, x):
        E, Y0, Yh = self._hom(t, x)
        return (E[1:, 1:] - Yh[..., :, None] * E[0, 1:]) / Y0[..., None, None]

    def hessian(self, t, x):
        E, Y0, Yh = self._hom(t, x)
        e0 = E[0, 1:]
        Ek = E[1:, 1:]
        Y0 = Y0[..., None, None, None]
        term = np.einsum("ki,j->kij", Ek, e0)
        term = term + np.swapaxes(term, -1, -2)
        return -term / Y0 ** 2 + 2.0 * np.einsum("...k,i,j->...kij", Yh, e0, e0) / Y0 ** 2


class NumericFlow(FlowMap):
    """Flow by adaptive RK45 integration of ``xdot = X(x)``."""

    def __init__(self, field: VectorField, rtol: float = 1e-11, atol: float = 1e-13):
        self.field = field
        self.dim = field.dim
        self.rtol = rtol
        self.atol = atol

    def apply(self, t, x):
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            return np.stack([self.apply(t, xi) for xi in x.reshape(-1, self.dim)]).reshape(x.shape)
        if t == 0:
            return x.copy()
        sol = solve_ivp(lambda s, y: self.field(y), (0.0, float(t)), x, method="RK45",
                        rtol=self.rtol, atol=self.atol)
        if not sol.success:
            raise DomainError(f"integration failed: {sol.message}", x)
        return sol.y[:, -1]


def flow_closed(lift: SlLift, t: float, x) -> np.ndarray:
    return ClosedFormFlow(lift).apply(t, x)


# --------------------------------------------------------------------------
# Linearizability and reduction

@dataclass
class LinearizabilityCertificate:
    linearizable: bool
    z: np.ndarray | None  # A^T z = w when linearizable
    w_kernel: np.ndarray  # component of w in Ker A
    rank: int
    near_threshold: bool  # a singular value sits within a factor 100 of the cutoff

    def __bool__(self):
        return self.linearizable


def _split(A: np.ndarray, rtol: float = RANK_RTOL):
    U, s, Vt = np.linalg.svd(A)
    smax = s[0] if s.size and s[0] > 0 else 0.0
    cut = rtol * smax
    rank = int(np.sum(s > cut)) if smax > 0 else 0
    near = bool(smax > 0 and np.any((s > cut / 100) & (s < cut * 100)))
    # Ker A is spanned by the trailing right singular vectors
    Kbasis = Vt[rank:].T
    return U, s, Vt, rank, Kbasis, near


def linearizable(nf: NormalFormField, rtol: float = RANK_RTOL) -> LinearizabilityCertificate:
    """Decide whether ``w`` lies in the image of ``A^T``.

    ``R^n = Im(A^T) (+) Ker A`` orthogonally, so ``w`` is in the image iff its
    projection ``w_k`` onto ``Ker A`` vanishes.
    """
    A, w = nf.A, nf.w
    U, s, Vt, rank, Kb, near = _split(A, rtol)
    wk = Kb @ (Kb.T @ w)
    ok = np.linalg.norm(wk) <= rtol * (1.0 + np.linalg.norm(w))
    z = None
    if ok:
        # minimal-norm solution of A^T z = w - w_k
        z = U[:, :rank] @ ((Vt[:rank] @ (w - wk)) / s[:rank])
    return LinearizabilityCertificate(bool(ok), z, wk, rank, near)


@dataclass
class Reduction:
    field: NormalFormField
    c: np.ndarray  # chart change x -> x / (1 + c.x) conjugates the flows

    def chart_map(self, x):
        x = np.asarray(x, dtype=float)
        return x / (1.0 + x @ self.c)[..., None]

    def chart_map_inv(self, y):
        y = np.asarray(y, dtype=float)
        return y / (1.0 - y @ self.c)[..., None]


def reduce_ker(nf: NormalFormField, rtol: float = RANK_RTOL, return_map: bool = False):
    """Conjugate ``(A, w)`` to ``(A, w_k)`` with ``w_k`` in ``Ker A``.

    Writing ``w = A^T c + w_k``, the homogeneous change
    ``C = [[1, c^T], [0, Id]]`` (chart map ``x -> x/(1 + c.x)``) conjugates the
    lifts: ``C M C^{-1}`` has ``w`` replaced by ``w - A^T c = w_k``.
    """
    U, s, Vt, rank, Kb, _ = _split(nf.A, rtol)
    wk = Kb @ (Kb.T @ nf.w)
    c = U[:, :rank] @ ((Vt[:rank] @ (nf.w - wk)) / s[:rank]) if rank else np.zeros(nf.dim)
    out = NormalFormField(nf.A.copy(), wk)
    if np.allclose(wk, nf.w, rtol=0, atol=0):
        out = NormalFormField(nf.A.copy(), nf.w.copy())
        c = np.zeros(nf.dim)
    return Reduction(out, c) if return_map else out


def radial_rate(flow: ClosedFormFlow, v: np.ndarray, ys: Sequence[float], ts: Sequence[float]):
    """Fit ``phi^t(y v) = y/(1 + t a y) v`` and return ``(a, max_defect)``.

    The defect combines the distance of images from the line ``R v`` and
    the deviation of the fitted profile.
    """
    v = np.asarray(v, dtype=float)
    vv = v @ v
    rows, rhs, off_line, samples = [], [], 0.0, []
    for t in ts:
        for y in ys:
            p = flow.apply(t, y * v)
            yt = (p @ v) / vv
            off_line = max(off_line, float(np.linalg.norm(p - yt * v)))
            samples.append((t, y, yt))
            # y/yt - 1 = t a y
            rows.append(t * y)
            rhs.append(y / yt - 1.0)
    rows, rhs = np.array(rows), np.array(rhs)
    a = float(rows @ rhs / (rows @ rows))
    prof = max(abs(yt - y / (1 + t * a * y)) for t, y, yt in samples)
    return a, max(off_line, prof)


# --------------------------------------------------------------------------
# Projectivity test

@dataclass
class ProjectivityReport:
    projective: bool
    affine: bool
    trace_free_residual: float
    affine_residual: float
    per_point: np.ndarray = field(repr=False)


def lie_derivative_connection(X: VectorField, conn: Connection, x) -> np.ndarray:
    """``(L_X nabla)[..., k, i, j]`` at ``x``."""
    V, dV, ddV = X.jet2(x)  # dV[k, m] = d_m X^k
    G, dG = conn.gamma_d1(x)
    L = (ddV + np.einsum("...m,...kijm->...kij", V, dG) - np.einsum("...km,...mij->...kij", dV, G)
         + np.einsum("...mi,...kmj->...kij", dV, G) + np.einsum("...mj,...kim->...kij", dV, G))
    return L


def trace_free_part(L):
    n = L.shape[-1]
    T = np.einsum("...mim->...i", L)
    I = np.eye(n)
    return L - (np.einsum("ki,...j->...kij", I, T) + np.einsum("kj,...i->...kij", I, T)) / (n + 1)


def is_projective(X: VectorField, conn: Connection, points, tol: float = 1e-7,
                  affine_tol: float | None = None) -> ProjectivityReport:
    """Trace-free Lie-derivative test at the given sample points."""
    L = lie_derivative_connection(X, conn, points)
    tf = np.abs(trace_free_part(L)).reshape(L.shape[:-3] + (-1,)).max(-1)
    af = np.abs(L).reshape(L.shape[:-3] + (-1,)).max(-1)
    tfr, afr = float(tf.max()), float(af.max())
    return ProjectivityReport(tfr <= tol, afr <= (tol if affine_tol is None else affine_tol), tfr, afr,
                              np.stack([tf, af], -1))
