"""Metrics, torsion-free connections and curvature on a single chart.

Index conventions (all arrays carry optional leading batch axes):

* metric ``g[..., i, j]``; first derivatives ``dg[..., i, j, c] = d_c g_ij``;
  second derivatives ``ddg[..., i, j, c, d]``.
* Christoffel symbols ``G[..., k, i, j] = Gamma^k_ij`` and
  ``dG[..., k, i, j, c] = d_c Gamma^k_ij``.
* Riemann ``R[..., i, j, k, l] = R^i_jkl`` with
  ``R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj + Gamma^i_km Gamma^m_lj - Gamma^i_lm Gamma^m_kj``
  and Ricci ``Ric_jl = R^i_jil``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .exprcore import Expr, eval_jet2, parse_expr, DomainError

FD_STEP = 1e-5  # step of the single central-difference layer used for order-3 data


class DegenerateError(DomainError):
    """A metric or tensor is (numerically) singular at the evaluation point."""


# --------------------------------------------------------------------------
# Chart

@dataclass(frozen=True)
class ChartDomain:
    """Axis-aligned box chart with an optional positivity constraint.

    ``exclusion`` is an expression that must stay strictly positive on the
    usable part of the chart (e.g. ``1 + t*x1`` for a flow domain).
    """

    lo: tuple
    hi: tuple
    exclusion: Expr | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have equal length")
        if len(lo) < 2:
            raise ValueError("chart dimension must be at least 2")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("chart bounds require lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def box(cls, dim: int, radius: float = 0.5, exclusion: str | None = None) -> "ChartDomain":
        e = parse_expr(exclusion, dim) if exclusion else None
        return cls((-radius,) * dim, (radius,) * dim, e)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (np.array(self.hi) - np.array(self.lo))

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= np.array(self.lo) + margin) & (x <= np.array(self.hi) - margin), axis=-1)
        if self.exclusion is not None:
            from .exprcore import evaluate
            inside &= evaluate(self.exclusion, x, self.params) > 0.0
        return inside

    def sample(self, m: int, seed: int = 0, shrink: float = 1.0) -> np.ndarray:
        """``m`` scrambled-Sobol points in the box scaled by ``shrink`` about its center.

        Points violating the exclusion predicate are dropped and replaced by
        further quasi-random points so that exactly ``m`` are returned.
        """
        from scipy.stats import qmc

        sob = qmc.Sobol(self.dim, scramble=True, seed=seed)
        out = []
        need = m
        while need > 0:
            with warnings.catch_warnings():
                # balance of non power-of-two draws is irrelevant for spot checks
                warnings.simplefilter("ignore", UserWarning)
                u = sob.random(max(need, 16) * 2)
            x = self.center + shrink * self.half_width * (2.0 * u - 1.0)
            x = x[self.contains(x)]
            out.append(x[:need])
            need -= len(out[-1])
        return np.concatenate(out)[:m]


# --------------------------------------------------------------------------
# Metrics

def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


class MetricField:
    """Abstract symmetric (0,2)-tensor field on a chart.

    Subclasses provide :meth:`jet1`; :meth:`jet2` defaults to one central
    finite-difference layer on top of analytic first derivatives.
    """

    dim: int

    def value(self, x) -> np.ndarray:
        return self.jet1(x)[0]

    def jet1(self, x):
        raise NotImplementedError

    def jet2(self, x):
        g, dg = self.jet1(x)
        return g, dg, fd_layer(lambda y: self.jet1(y)[1], x, self.dim)

    def __call__(self, x):
        return self.value(x)


def fd_layer(fn: Callable, x, n: int, h: float = FD_STEP) -> np.ndarray:
    """Central differences of ``fn`` along each coordinate, stacked on a new last axis."""
    x = np.asarray(x, dtype=float)
    cols = []
    for c in range(n):
        e = np.zeros(n)
        e[c] = h
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


class ExprMetric(MetricField):
    """Metric whose components are expressions in the chart coordinates.

    Only the upper triangle is parsed; the lower triangle mirrors it, so the
    evaluated matrix is exactly symmetric.
    """

    def __init__(self, components: Sequence[Sequence[str | Expr]], dim: int | None = None,
                 params: Mapping[str, float] | None = None, chart: ChartDomain | None = None):
        n = dim or len(components)
        if len(components) != n or any(len(r) != n for r in components):
            raise ValueError(f"metric must be an {n}x{n} grid of expressions")
        self.dim = n
        self.params = dict(params or {})
        self.chart = chart
        self.exprs = {}
        for i in range(n):
            for j in range(i, n):
                c = components[i][j]
                self.exprs[i, j] = c if not isinstance(c, str) else parse_expr(c, n, self.params)

    @property
    def sources(self):
        from .exprcore import to_source
        n = self.dim
        return [[to_source(self.exprs[min(i, j), max(i, j)]) for j in range(n)] for i in range(n)]

    def _jets(self, x):
        x = np.asarray(x, dtype=float)
        return {k: eval_jet2(e, x, self.params) for k, e in self.exprs.items()}, x.shape[:-1]

    def jet1(self, x):
        g, dg, _ = self.jet2(x, _need2=False)
        return g, dg

    def jet2(self, x, _need2=True):
        jets, shape = self._jets(x)
        n = self.dim
        g = np.empty(shape + (n, n))
        dg = np.empty(shape + (n, n, n))
        ddg = np.empty(shape + (n, n, n, n)) if _need2 else None
        for (i, j), J in jets.items():
            for a, b in ((i, j), (j, i)):
                g[..., a, b] = J.val
                dg[..., a, b, :] = J.grad
                if _need2:
                    ddg[..., a, b, :, :] = J.hess
        return g, dg, ddg


class ConstantMetric(MetricField):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.dim = self.matrix.shape[0]

    def jet1(self, x):
        x = np.asarray(x, dtype=float)
        shape, n = x.shape[:-1], self.dim
        return np.broadcast_to(self.matrix, shape + (n, n)).copy(), np.zeros(shape + (n, n, n))

    def jet2(self, x):
        g, dg = self.jet1(x)
        return g, dg, np.zeros(dg.shape + (self.dim,))


def check_metric(g: MetricField, points, det_tol: float = 1e-10) -> dict:
    """Symmetry, non-degeneracy and constant signature on sampled points."""
    G = g.value(points)
    asym = float(np.max(np.abs(G - np.swapaxes(G, -1, -2)))) if G.size else 0.0
    det = np.linalg.det(G)
    eig = np.linalg.eigvalsh(_sym(G))
    sig = np.sum(eig > 0, axis=-1)
    return {
        "max_asymmetry": asym,
        "min_abs_det": float(np.min(np.abs(det))),
        "nondegenerate": bool(np.all(np.abs(det) > det_tol)),
        "signature_constant": bool(np.all(sig == sig.flat[0])),
        "positive_index": int(sig.flat[0]),
    }


# --------------------------------------------------------------------------
# Connections

class Connection:
    """Abstract torsion-free connection given by its Christoffel symbols."""

    dim: int

    def gamma(self, x) -> np.ndarray:
        return self.gamma_d1(x)[0]

    def gamma_d1(self, x):
        raise NotImplementedError


def _inv_checked(g, x=None):
    det = np.linalg.det(g)
    bad = np.abs(det) <= 1e-14
    if np.any(bad):
        pt = None
        if x is not None:
            x = np.asarray(x, dtype=float)
            pt = x if x.ndim == 1 else x.reshape(-1, x.shape[-1])[int(np.argmax(bad.reshape(-1)))]
        raise DegenerateError("degenerate metric at evaluation point", pt)
    return np.linalg.inv(g)


def _christoffel_from(ginv, dg):
    # lowered: Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
                 - np.einsum("...ijl->...lij", dg))
    G = np.einsum("...kl,...lij->...kij", ginv, low)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


class LeviCivita(Connection):
    """Levi-Civita connection of a metric field."""

    def __init__(self, metric: MetricField):
        self.metric = metric
        self.dim = metric.dim

    def gamma(self, x):
        g, dg = self.metric.jet1(x)
        return _christoffel_from(_inv_checked(g, x), dg)

    def gamma_d1(self, x):
        g, dg, ddg = self.metric.jet2(x)
        ginv = _inv_checked(g, x)
        G = _christoffel_from(ginv, dg)
        # d_c g^{kl} = -g^{ka} d_c g_ab g^{bl}
        dginv = -np.einsum("...ka,...abc,...bl->...klc", ginv, dg, ginv)
        low = 0.5 * (np.einsum("...jlic->...lijc", ddg) + np.einsum("...iljc->...lijc", ddg)
                     - np.einsum("...ijlc->...lijc", ddg))
        low0 = 0.5 * (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
                      - np.einsum("...ijl->...lij", dg))
        dG = np.einsum("...klc,...lij->...kijc", dginv, low0) + np.einsum("...kl,...lijc->...kijc", ginv, low)
        dG = 0.5 * (dG + np.swapaxes(dG, -2, -3))
        return G, dG


class FlatConnection(Connection):
    def __init__(self, dim: int):
        self.dim = dim

    def gamma_d1(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        return np.zeros(x.shape[:-1] + (n, n, n)), np.zeros(x.shape[:-1] + (n, n, n, n))


class ExprConnection(Connection):
    """Connection with explicit Christoffel expressions ``exprs[k][i][j]``.

    Symmetry in (i, j) is enforced by averaging on evaluation; the
    asymmetry of the sources is reported by :meth:`torsion`.
    """

    def __init__(self, exprs, dim: int | None = None, params: Mapping[str, float] | None = None):
        n = dim or len(exprs)
        self.dim = n
        self.params = dict(params or {})
        self.exprs = [[[e if not isinstance(e, str) else parse_expr(e, n, self.params) for e in row]
                       for row in plane] for plane in exprs]

    def _raw(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        G = np.empty(x.shape[:-1] + (n, n, n))
        dG = np.empty(x.shape[:-1] + (n, n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    J = eval_jet2(self.exprs[k][i][j], x, self.params)
                    G[..., k, i, j] = J.val
                    dG[..., k, i, j, :] = J.grad
        return G, dG

    def torsion(self, x) -> float:
        G, _ = self._raw(x)
        return float(np.max(np.abs(G - np.swapaxes(G, -1, -2))))

    def gamma_d1(self, x):
        G, dG = self._raw(x)
        return 0.5 * (G + np.swapaxes(G, -1, -2)), 0.5 * (dG + np.swapaxes(dG, -2, -3))


class OneForm:
    """A 1-form eta with components given as expressions or a jet callable."""

    def __init__(self, components=None, dim: int | None = None, params=None, jet=None):
        if jet is not None:
            self._jet = jet
            self.dim = dim
            return
        n = dim or len(components)
        self.dim = n
        self.params = dict(params or {})
        self.exprs = [c if not isinstance(c, str) else parse_expr(c, n, self.params) for c in components]
        self._jet = None

    def jet1(self, x):
        """Values ``eta[..., i]`` and derivatives ``deta[..., i, c] = d_c eta_i``."""
        if self._jet is not None:
            return self._jet(x)
        x = np.asarray(x, dtype=float)
        js = [eval_jet2(e, x, self.params) for e in self.exprs]
        return np.stack([j.val for j in js], -1), np.stack([j.grad for j in js], -2)

    def value(self, x):
        return self.jet1(x)[0]


def shift_by_one_form(G, eta):
    """Christoffel symbols of ``nabla + eta (x) Id + Id (x) eta``."""
    n = G.shape[-1]
    I = np.eye(n)
    return G + np.einsum("...i,kj->...kij", eta, I) + np.einsum("...j,ki->...kij", eta, I)


class ProjectivelyShifted(Connection):
    """The connection ``nabla' = nabla + eta (x) Id + Id (x) eta``."""

    def __init__(self, base: Connection, eta: OneForm):
        self.base = base
        self.eta = eta
        self.dim = base.dim

    def gamma_d1(self, x):
        G, dG = self.base.gamma_d1(x)
        eta, deta = self.eta.jet1(x)
        I = np.eye(self.dim)
        dG2 = dG + np.einsum("...ic,kj->...kijc", deta, I) + np.einsum("...jc,ki->...kijc", deta, I)
        return shift_by_one_form(G, eta), dG2


# --------------------------------------------------------------------------
# Operations

def christoffel(g: MetricField, x) -> np.ndarray:
    """Levi-Civita Christoffel symbols ``G[k, i, j]`` of ``g`` at ``x``."""
    return LeviCivita(g).gamma(x)


@dataclass
class CurvatureTensors:
    riemann: np.ndarray
    ricci: np.ndarray
    weyl_proj: np.ndarray | None = None

    def antisymmetry_defect(self) -> float:
        R = self.riemann
        return float(np.max(np.abs(R + np.swapaxes(R, -1, -2))))

    def weyl_trace_defect(self) -> float:
        if self.weyl_proj is None:
            raise ValueError("projective Weyl tensor not computed")
        return float(np.max(np.abs(np.einsum("...ijil->...jl", self.weyl_proj))))


def riemann_from_gamma(G, dG):
    R = (np.einsum("...iljk->...ijkl", dG) - np.einsum("...ikjl->...ijkl", dG)
         + np.einsum("...ikm,...mlj->...ijkl", G, G) - np.einsum("...ilm,...mkj->...ijkl", G, G))
    return R


def riemann_ricci(conn: Connection, x) -> CurvatureTensors:
    G, dG = conn.gamma_d1(x)
    R = riemann_from_gamma(G, dG)
    return CurvatureTensors(R, np.einsum("...ijil->...jl", R))


def weyl_from_riemann(R, Ric):
    """Projective Weyl tensor for a torsion-free connection.

    The Ricci tensor may be non-symmetric (connections outside the
    Levi-Civita class); its skew part enters through the trace term
    ``beta_kl delta^i_j``.  For symmetric Ricci this is
    ``R^i_jkl - (delta^i_k Ric_jl - delta^i_l Ric_jk)/(n-1)``.
    """
    n = R.shape[-1]
    I = np.eye(n)
    sym = 0.5 * (Ric + np.swapaxes(Ric, -1, -2))
    skew = 0.5 * (Ric - np.swapaxes(Ric, -1, -2))
    P = sym / (n - 1) - skew / (n + 1)  # P[j, l]
    beta = 2.0 * skew / (n + 1)
    return (R - np.einsum("ik,...lj->...ijkl", I, P) + np.einsum("il,...kj->...ijkl", I, P)
            - np.einsum("...kl,ij->...ijkl", beta, I))


def projective_weyl(conn: Connection, x) -> np.ndarray:
    """Projective Weyl tensor ``W[i, j, k, l] = W^i_jkl`` at ``x``.

    Defined for every n >= 2; only for n >= 3 does its vanishing
    characterize projective flatness (at n = 2 it vanishes identically).
    """
    ct = riemann_ricci(conn, x)
    return weyl_from_riemann(ct.riemann, ct.ricci)


def curvature(conn: Connection, x) -> CurvatureTensors:
    ct = riemann_ricci(conn, x)
    ct.weyl_proj = weyl_from_riemann(ct.riemann, ct.ricci)
    return ct


@dataclass
class ProjectiveDiff:
    eta: np.ndarray
    residual: float
    success: bool


def projective_diff(conn1: Connection, conn2: Connection, x, tol: float = 1e-8) -> ProjectiveDiff:
    """1-form ``eta`` with ``conn2 = conn1 + eta (x) Id + Id (x) eta``, if it exists.

    The candidate comes from the contracted difference
    ``eta_i = (G2^k_ki - G1^k_ki)/(n+1)``; ``residual`` measures how far the
    full difference tensor is from the projective form.
    """
    if conn1.dim != conn2.dim:
        raise ValueError(f"dimension mismatch: {conn1.dim} vs {conn2.dim}")
    n = conn1.dim
    D = conn2.gamma(x) - conn1.gamma(x)
    eta = np.einsum("...kki->...i", D) / (n + 1)
    res = float(np.max(np.abs(D - shift_by_one_form(np.zeros_like(D), eta)))) if D.size else 0.0
    return ProjectiveDiff(eta, res, res <= tol)
