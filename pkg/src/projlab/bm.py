"""Benenti--Matveev structures: g-strength, the BM equation and degree of mobility.

A BM structure for ``g`` is a g-self-adjoint (1,1)-tensor ``K`` with

    g((nabla_w K) u, v) = 1/2 (d trK(u) g(v, w) + d trK(v) g(u, w))

for all vectors ``u, v, w``.  Tensor fields here expose ``jet1(x)`` returning
``K[..., i, j] = K^i_j`` and ``dK[..., i, j, c] = d_c K^i_j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre

from .exprcore import eval_jet2, parse_expr
from .geom import ChartDomain, DegenerateError, LeviCivita, MetricField, fd_layer
from .projfield import VectorField


VALUE_RANK_RTOL = 1e-11


class NonRiemannianError(ValueError):
    pass


class NoSpectralGapError(ValueError):
    pass


# --------------------------------------------------------------------------
# Tensor fields

class TensorField:
    dim: int

    def jet1(self, x):
        raise NotImplementedError

    def value(self, x):
        return self.jet1(x)[0]

    def __call__(self, x):
        return self.value(x)


class ConstantTensor(TensorField):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.dim = self.matrix.shape[0]

    def jet1(self, x):
        x = np.asarray(x, dtype=float)
        shape, n = x.shape[:-1], self.dim
        return np.broadcast_to(self.matrix, shape + (n, n)).copy(), np.zeros(shape + (n, n, n))


def identity_field(n: int) -> ConstantTensor:
    return ConstantTensor(np.eye(n))


class ExprTensor(TensorField):
    """``K^i_j`` given by an n x n grid of expressions."""

    def __init__(self, components, dim: int | None = None, params=None):
        n = dim or len(components)
        self.dim = n
        self.params = dict(params or {})
        self.exprs = [[c if not isinstance(c, str) else parse_expr(c, n, self.params) for c in row]
                      for row in components]

    def jet1(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        K = np.empty(x.shape[:-1] + (n, n))
        dK = np.empty(x.shape[:-1] + (n, n, n))
        for i in range(n):
            for j in range(n):
                J = eval_jet2(self.exprs[i][j], x, self.params)
                K[..., i, j] = J.val
                dK[..., i, j, :] = J.grad
        return K, dK


class NumericTensor(TensorField):
    """Tensor field from a value callable; derivatives by the central-difference layer."""

    def __init__(self, fn, dim: int):
        self.fn = fn
        self.dim = dim

    def value(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def jet1(self, x):
        return self.value(x), fd_layer(self.value, x, self.dim)


class LinearCombination(TensorField):
    def __init__(self, fields: Sequence[TensorField], coeffs):
        self.fields = list(fields)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.dim = self.fields[0].dim

    def jet1(self, x):
        K = dK = 0.0
        for c, f in zip(self.coeffs, self.fields):
            if c == 0.0:
                continue
            a, b = f.jet1(x)
            K = K + c * a
            dK = dK + c * b
        if np.isscalar(K):
            x = np.asarray(x, dtype=float)
            n = self.dim
            return np.zeros(x.shape[:-1] + (n, n)), np.zeros(x.shape[:-1] + (n, n, n))
        return K, dK


# --------------------------------------------------------------------------
# g-strength

def _as_matrix(m, x):
    if isinstance(m, MetricField):
        return m.value(x)
    return np.asarray(m, dtype=float)


def _det_checked(M, what="matrix", tol=1e-14):
    d = np.linalg.det(M)
    if np.any(np.abs(d) <= tol):
        raise DegenerateError(f"degenerate {what}")
    return d


def strength_from_matrices(g, gbar):
    """``K = |det S|^{1/(n+1)} S^{-1}`` with ``S = g^{-1} gbar`` (batched)."""
    n = g.shape[-1]
    _det_checked(g, "metric")
    S = np.linalg.solve(g, gbar)
    dS = _det_checked(S, "metric pair")
    return np.abs(dS)[..., None, None] ** (1.0 / (n + 1)) * np.linalg.inv(S)


def metric_from_strength(g, K):
    """Inverse of :func:`strength_from_matrices`: ``gbar = g K^{-1} / |det K|``."""
    d = _det_checked(K, "BM structure (eigenvalue 0)")
    return g @ np.linalg.inv(K) / np.abs(d)[..., None, None]


def g_strength(g, gbar, x=None, check: bool = True, tol: float = 1e-10) -> np.ndarray:
    """g-strength of ``gbar`` with respect to ``g`` at ``x``.

    ``g``/``gbar`` may be :class:`MetricField` objects (then ``x`` is
    required) or metric matrices.
    """
    G, Gb = _as_matrix(g, x), _as_matrix(gbar, x)
    K = strength_from_matrices(G, Gb)
    if check:
        back = metric_from_strength(G, K)
        err = np.max(np.abs(back - Gb)) / max(1.0, np.max(np.abs(Gb)))
        assert err <= tol, f"g-strength identity residual {err:.3e}"
    return K


def metric_from_K(g, K, x=None) -> np.ndarray:
    G = _as_matrix(g, x)
    Km = K.value(x) if isinstance(K, TensorField) else np.asarray(K, dtype=float)
    return metric_from_strength(G, Km)


class GStrengthField(TensorField):
    """g-strength of ``gbar`` as a field, with analytic first derivatives."""

    def __init__(self, g: MetricField, gbar: MetricField):
        self.g = g
        self.gbar = gbar
        self.dim = g.dim

    def value(self, x):
        return strength_from_matrices(self.g.value(x), self.gbar.value(x))

    def jet1(self, x):
        n = self.dim
        g, dg = self.g.jet1(x)
        gb, dgb = self.gbar.jet1(x)
        ginv = np.linalg.inv(g)
        S = ginv @ gb
        dS = (-np.einsum("...ia,...abc,...bj->...ijc", ginv, dg, S)
              + np.einsum("...ia,...ajc->...ijc", ginv, dgb))
        Sinv = np.linalg.inv(S)
        p = 1.0 / (n + 1)
        f = np.abs(np.linalg.det(S)) ** p
        df = p * f[..., None] * np.einsum("...ij,...jic->...c", Sinv, dS)
        K = f[..., None, None] * Sinv
        dK = (np.einsum("...c,...ij->...ijc", df, Sinv)
              - f[..., None, None, None] * np.einsum("...ia,...abc,...bj->...ijc", Sinv, dS, Sinv))
        return K, dK


# --------------------------------------------------------------------------
# BM equation

def bm_residual_tensor(g, G, K, dK):
    """Residual ``R[..., a, b, c]`` of the BM equation for ``u=e_a, v=e_b, w=e_c``.

    ``G`` are the Christoffel symbols of ``g``.  The expression is linear in
    ``(K, dK)``; extra leading axes broadcast.
    """
    nabK = dK + np.einsum("...icm,...mj->...ijc", G, K) - np.einsum("...mcj,...im->...ijc", G, K)
    lhs = np.einsum("...ib,...iac->...abc", g, nabK)
    dtr = np.einsum("...iic->...c", dK)
    rhs = 0.5 * (np.einsum("...a,...bc->...abc", dtr, g) + np.einsum("...b,...ac->...abc", dtr, g))
    return lhs - rhs


def bm_residual_points(g: MetricField, K: TensorField, x) -> np.ndarray:
    """Per-point max-abs residual of the BM equation."""
    gm, dg = g.jet1(x)
    G = LeviCivita(g).gamma(x)
    Km, dK = K.jet1(x)
    R = bm_residual_tensor(gm, G, Km, dK)
    return np.abs(R).reshape(R.shape[:-3] + (-1,)).max(-1)


def bm_residual(g: MetricField, K: TensorField, x) -> float:
    """Max residual of the BM equation over basis triples (and over points if batched)."""
    return float(np.max(bm_residual_points(g, K, x)))


def self_adjointness_defect(g: MetricField, K: TensorField, x) -> float:
    gK = np.einsum("...ia,...aj->...ij", g.value(x), K.value(x))
    return float(np.max(np.abs(gK - np.swapaxes(gK, -1, -2))))


# --------------------------------------------------------------------------
# BM structure induced by a projective field

class FieldBM(TensorField):
    """``K' = g^{-1} L_X g - tr(g^{-1} L_X g)/(n+1) Id`` with analytic derivatives."""

    def __init__(self, g: MetricField, X: VectorField):
        self.g = g
        self.X = X
        self.dim = g.dim

    def jet1(self, x):
        n = self.dim
        g, dg, ddg = self.g.jet2(x)
        V, dV, ddV = self.X.jet2(x)  # dV[k, i] = d_i X^k
        Lg = (np.einsum("...m,...ijm->...ij", V, dg) + np.einsum("...mj,...mi->...ij", g, dV)
              + np.einsum("...im,...mj->...ij", g, dV))
        dLg = (np.einsum("...mc,...ijm->...ijc", dV, dg) + np.einsum("...m,...ijmc->...ijc", V, ddg)
               + np.einsum("...mjc,...mi->...ijc", dg, dV) + np.einsum("...mj,...mic->...ijc", g, ddV)
               + np.einsum("...imc,...mj->...ijc", dg, dV) + np.einsum("...im,...mjc->...ijc", g, ddV))
        ginv = np.linalg.inv(g)
        N = ginv @ Lg
        dN = (-np.einsum("...ia,...abc,...bj->...ijc", ginv, dg, N)
              + np.einsum("...ia,...ajc->...ijc", ginv, dLg))
        I = np.eye(n)
        K = N - np.einsum("...ii->...", N)[..., None, None] * I / (n + 1)
        dK = dN - np.einsum("...iic->...c", dN)[..., None, None, :] * I[..., None] / (n + 1)
        return K, dK


def bm_from_field(g: MetricField, X: VectorField, x) -> np.ndarray:
    K = FieldBM(g, X).value(x)
    gK = np.einsum("...ia,...aj->...ij", g.value(x), K)
    assert np.max(np.abs(gK - np.swapaxes(gK, -1, -2))) <= 1e-9 * max(1.0, np.max(np.abs(gK))), \
        "K' not g-self-adjoint"
    return K


# --------------------------------------------------------------------------
# Degree of mobility by collocation

def _multi_indices(n: int, d: int):
    out = []

    def rec(prefix, left):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for k in range(left + 1):
            rec(prefix + [k], left - k)

    rec([], d)
    return sorted(out, key=lambda a: (sum(a), tuple(-v for v in a)))


class LegendreBasis:
    """Tensor-product Legendre polynomials of total degree <= d on a box."""

    def __init__(self, chart: ChartDomain, degree: int):
        self.center = chart.center
        self.hw = chart.half_width
        self.n = chart.dim
        self.degree = degree
        self.alphas = _multi_indices(self.n, degree)
        eye = np.eye(degree + 1)
        self._c = [eye[k] for k in range(degree + 1)]
        self._dc = [legendre.legder(eye[k]) if k else np.zeros(1) for k in range(degree + 1)]

    def __len__(self):
        return len(self.alphas)

    def eval(self, x):
        """Values ``phi[..., p]`` and gradients ``dphi[..., p, c]``."""
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.hw
        d = self.degree
        P = np.stack([np.stack([legendre.legval(u[..., i], self._c[k]) for k in range(d + 1)], -1)
                      for i in range(self.n)], -2)  # [..., i, k]
        dP = np.stack([np.stack([legendre.legval(u[..., i], self._dc[k]) for k in range(d + 1)], -1)
                       for i in range(self.n)], -2) / self.hw[:, None]
        phi = np.empty(x.shape[:-1] + (len(self.alphas),))
        dphi = np.empty(x.shape[:-1] + (len(self.alphas), self.n))
        for p, a in enumerate(self.alphas):
            fac = [P[..., i, a[i]] for i in range(self.n)]
            phi[..., p] = np.prod(fac, axis=0)
            for c in range(self.n):
                f2 = list(fac)
                f2[c] = dP[..., c, a[c]]
                dphi[..., p, c] = np.prod(f2, axis=0)
        return phi, dphi


def _sym_units(n):
    pairs = list(combinations_with_replacement(range(n), 2))
    E = np.zeros((len(pairs), n, n))
    for k, (p, q) in enumerate(pairs):
        E[k, p, q] = 1.0
        E[k, q, p] = 1.0
    return pairs, E


class AnsatzSpace:
    """``K = c Id + sigma g`` with ``sigma`` a symmetric matrix of Legendre polynomials.

    ``K^i_j = sigma^{ia} g_aj`` is g-self-adjoint for every symmetric ``sigma``
    and every g-self-adjoint ``K`` has this form, so the ansatz only restricts
    the smoothness class of ``sigma``.  The identity (always a solution) is an
    explicit column so that it is represented exactly even when ``g^{-1}``
    is not polynomial; exact duplicates are removed by the estimator.
    """

    def __init__(self, g: MetricField, chart: ChartDomain, degree: int):
        self.g = g
        self.chart = chart
        self.basis = LegendreBasis(chart, degree)
        self.pairs, self.E = _sym_units(g.dim)

    @property
    def size(self):
        return 1 + len(self.pairs) * len(self.basis)

    def column_jets(self, x, gm=None, dg=None):
        """``K[..., col, i, j]`` and ``dK[..., col, i, j, c]`` for every ansatz column."""
        if gm is None:
            gm, dg = self.g.jet1(x)
        n = self.g.dim
        phi, dphi = self.basis.eval(x)
        Eg = np.einsum("pia,...aj->...pij", self.E, gm)
        Edg = np.einsum("pia,...ajc->...pijc", self.E, dg)
        K = np.einsum("...pij,...q->...pqij", Eg, phi)
        dK = (np.einsum("...pij,...qc->...pqijc", Eg, dphi) + np.einsum("...pijc,...q->...pqijc", Edg, phi))
        sh = K.shape[:-4]
        K = K.reshape(sh + (self.size - 1, n, n))
        dK = dK.reshape(sh + (self.size - 1, n, n, n))
        I = np.broadcast_to(np.eye(n), sh + (1, n, n))
        return (np.concatenate([I, K], axis=-3),
                np.concatenate([np.zeros(sh + (1, n, n, n)), dK], axis=-4))


class AnsatzField(TensorField):
    def __init__(self, space: AnsatzSpace, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.dim = space.g.dim

    def jet1(self, x):
        K, dK = self.space.column_jets(x)
        return np.einsum("...pij,p->...ij", K, self.coeffs), np.einsum("...pijc,p->...ijc", dK, self.coeffs)


@dataclass
class MobilityReport:
    dimension: int
    singular_values: np.ndarray
    coefficients: np.ndarray  # rows: nullspace basis in ansatz coordinates
    degree: int
    samples: int
    unknowns: int
    tol: float
    gap_ratio: float
    ill_conditioned: bool
    bound: int
    space: AnsatzSpace = field(repr=False, default=None)

    @property
    def within_bound(self) -> bool:
        return 1 <= self.dimension <= self.bound

    def basis_fields(self) -> list:
        return [AnsatzField(self.space, c) for c in self.coefficients]

    def to_dict(self) -> dict:
        return {
            "dimension": int(self.dimension),
            "singular_values": [float(s) for s in self.singular_values],
            "ansatz": {"degree": int(self.degree), "samples": int(self.samples), "unknowns": int(self.unknowns)},
            "gap_ratio": _finite(self.gap_ratio),
            "ill_conditioned": bool(self.ill_conditioned),
            "tol": float(self.tol),
            "bound": int(self.bound),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def mobility_estimate(g: MetricField, chart: ChartDomain, degree: int = 4, samples: int | None = None,
                      tol: float = 1e-8, seed: int = 0, shrink: float = 1.0) -> MobilityReport:
    """Estimate ``dim B(M, g)`` as the numerical nullspace of the collocated BM operator.

    Rows are the BM residuals for ``(e_a, e_b, e_c)``, ``a <= b``, at
    scrambled-Sobol points; columns are the ansatz coefficients (normalized
    to unit norm).  ``samples`` defaults to three times the number of
    unknowns and may not be smaller.
    """
    n = g.dim
    space = AnsatzSpace(g, chart, degree)
    N = space.size
    if samples is None:
        samples = 3 * N
    if samples < 3 * N:
        raise ValueError(f"underdetermined sampling: {samples} points for {N} unknowns (need >= {3 * N})")
    x = chart.sample(samples, seed=seed, shrink=shrink)
    gm, dg = g.jet1(x)
    det = np.linalg.det(gm)
    if np.any(np.abs(det) <= 1e-10):
        k = int(np.argmin(np.abs(det)))
        raise DegenerateError("degenerate metric sample", x[k])
    G = LeviCivita(g).gamma(x)
    K, dK = space.column_jets(x, gm, dg)
    R = bm_residual_tensor(gm[:, None], G[:, None], K, dK)  # [m, col, a, b, c]
    ia, ib = np.triu_indices(n)
    A = np.moveaxis(R[:, :, ia, ib, :], 1, -1).reshape(-1, N)
    # Measure residuals per unit field norm: orthonormalize the sampled
    # ansatz values first (this also drops exactly duplicated columns).
    V = np.moveaxis(K, 1, -1).reshape(-1, N)
    _, sv, Wt = np.linalg.svd(V, full_matrices=False)
    r = int(np.sum(sv > VALUE_RANK_RTOL * sv[0]))
    T = Wt[:r].T / sv[:r]
    _, s, Ut = np.linalg.svd(A @ T, full_matrices=False)
    smax = s[0]
    D = int(np.sum(s <= tol * smax))
    if 0 < D < r:
        gap = s[r - D - 1] / max(s[r - D], np.finfo(float).tiny)
    elif D == 0:
        gap = s[-2] / s[-1] if r > 1 and s[-1] > 0 else np.inf
    else:
        gap = np.inf
    coeffs = (T @ Ut[r - D:].T).T if D else np.zeros((0, N))
    ill = bool(gap < 10.0)
    return MobilityReport(D, s, coeffs, degree, samples, N, tol, float(gap), ill, (n + 1) * (n + 2) // 2, space)


# --------------------------------------------------------------------------
# Eigenvalue ordering (Riemannian) and spectral splitting

@dataclass
class OrderingReport:
    ordered: bool
    violations: list
    lam_max: list
    lam_min: list
    points: int


def ordering_check(g: MetricField, K: TensorField, region: ChartDomain, m: int = 200, seed: int = 0,
                   slack: float = 1e-8) -> OrderingReport:
    """Check ``lambda_i(x) <= lambda_{i+1}(y)`` for all sampled pairs ``x, y``.

    Eigenvalues of the g-self-adjoint ``K`` are the generalized eigenvalues
    of ``(g K, g)``; this requires ``g`` positive definite.
    """
    x = region.sample(m, seed=seed)
    gm = g.value(x)
    if np.any(np.linalg.eigvalsh(0.5 * (gm + np.swapaxes(gm, -1, -2))) <= 0):
        raise NonRiemannianError("eigenvalue ordering requires a positive-definite metric")
    gK = np.einsum("...ia,...aj->...ij", gm, K.value(x))
    gK = 0.5 * (gK + np.swapaxes(gK, -1, -2))
    lam = np.stack([scipy.linalg.eigh(a, b, eigvals_only=True) for a, b in zip(gK, gm)])
    n = g.dim
    hi, lo = lam.max(axis=0), lam.min(axis=0)
    viol = [(i + 1, float(hi[i]), float(lo[i + 1])) for i in range(n - 1) if hi[i] > lo[i + 1] + slack]
    return OrderingReport(not viol, viol, hi.tolist(), lo.tolist(), m)


@dataclass
class SplittingReport:
    orthogonal: bool
    max_cross: float
    clusters: tuple
    gap: float


def splitting_orthogonality(g, K, x=None, cluster_gap: float = 1e-3, tol: float = 1e-8) -> SplittingReport:
    """g-orthogonality of the two spectral clusters of ``K`` at a point.

    The spectrum is split at the largest gap between consecutive real parts;
    invariant subspaces come from ordered Schur forms, so generalized
    eigenspaces are handled.
    """
    G = _as_matrix(g, x)
    Km = K.value(x) if isinstance(K, TensorField) else np.asarray(K, dtype=float)
    ev = np.linalg.eigvals(Km)
    re = np.sort(ev.real)
    gaps = np.diff(re)
    if gaps.size == 0 or gaps.max() < cluster_gap:
        raise NoSpectralGapError("spectrum has no admissible gap")
    k = int(np.argmax(gaps))
    cut = 0.5 * (re[k] + re[k + 1])
    _, Z1, s1 = scipy.linalg.schur(Km, output="real", sort=lambda a, b: a < cut)
    _, Z2, s2 = scipy.linalg.schur(Km, output="real", sort=lambda a, b: a > cut)
    U1, U2 = Z1[:, :s1], Z2[:, :s2]
    cross = float(np.linalg.norm(U1.T @ G @ U2, 2))
    c1 = tuple(sorted(ev[ev.real < cut].real.round(12).tolist()))
    c2 = tuple(sorted(ev[ev.real > cut].real.round(12).tolist()))
    return SplittingReport(cross <= tol, cross, (c1, c2), float(gaps.max()))


def mobility_sweep(g: MetricField, chart: ChartDomain, degrees: Sequence[int], tail: int = 8,
                   seed: int = 0) -> dict:
    """Smallest relative singular values of the collocated operator for several degrees.

    Genuine solutions that the ansatz only approximates show singular values
    decaying geometrically with the degree; spurious near-solutions plateau.
    """
    out = {}
    for d in degrees:
        r = mobility_estimate(g, chart, d, tol=0.0, seed=seed)
        s = r.singular_values / r.singular_values[0]
        out[int(d)] = s[-tail:][::-1].tolist()
    return out
