"""The one-parameter group L_t induced by a projective flow on BM structures.

For a flow ``phi^t`` and metric ``g`` let ``g_t = (phi^t)^* g`` and let
``K_t`` be the g-strength of ``g_t``.  Then

    L_t(K) = (phi^t)^* K . K_t,   (phi^t)^* K (x) = J(x)^{-1} K(phi^t x) J(x),

acts linearly on the space of BM structures and satisfies
``L_{t+s} = L_t o L_s``.  On the pair ``{Kbar, Id}`` with ``Kbar = L_t0(Id)``
its matrix is ``[[alpha, 1], [beta, 0]]`` and the induced action on
eigenvalues is the Moebius map ``T(z) = (alpha z + beta)/z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bm import (GStrengthField, TensorField, identity_field, strength_from_matrices)
from .exprcore import DomainError
from .geodesic import GeodesicCurve, extract_reparam, invariant_parameters
from .geom import LeviCivita, MetricField, projective_diff


# --------------------------------------------------------------------------
# Maps and pullbacks

class MapAt:
    """A fixed diffeomorphism: the time-``t`` map of a closed-form flow."""

    def __init__(self, flow, t: float):
        self.flow = flow
        self.t = float(t)
        self.dim = flow.dim

    def apply(self, x):
        return self.flow.apply(self.t, x)

    def jacobian(self, x):
        return self.flow.jacobian(self.t, x)

    def hessian(self, x):
        return self.flow.hessian(self.t, x)


class ComposedMap:
    """``outer o inner`` with chain-rule Jacobian and Hessian."""

    def __init__(self, outer, inner):
        self.outer = outer
        self.inner = inner
        self.dim = inner.dim

    def apply(self, x):
        return self.outer.apply(self.inner.apply(x))

    def jacobian(self, x):
        y = self.inner.apply(x)
        return np.einsum("...ka,...aj->...kj", self.outer.jacobian(y), self.inner.jacobian(x))

    def hessian(self, x):
        y = self.inner.apply(x)
        Jo, Ho = self.outer.jacobian(y), self.outer.hessian(y)
        Ji, Hi = self.inner.jacobian(x), self.inner.hessian(x)
        return (np.einsum("...kab,...ai,...bj->...kij", Ho, Ji, Ji)
                + np.einsum("...ka,...aij->...kij", Jo, Hi))


class PullbackMetric(MetricField):
    """``g_t(x) = J(x)^T g(phi x) J(x)`` with analytic first derivatives."""

    def __init__(self, g: MetricField, fmap, t: float | None = None):
        self.g = g
        self.map = fmap if t is None else MapAt(fmap, t)
        self.dim = g.dim

    def value(self, x):
        J = self.map.jacobian(x)
        G = self.g.value(self.map.apply(x))
        return np.einsum("...ai,...ab,...bj->...ij", J, G, J)

    def jet1(self, x):
        y = self.map.apply(x)
        J, H = self.map.jacobian(x), self.map.hessian(x)
        G, dG = self.g.jet1(y)
        gt = np.einsum("...ai,...ab,...bj->...ij", J, G, J)
        dgt = (np.einsum("...aic,...ab,...bj->...ijc", H, G, J)
               + np.einsum("...ai,...abd,...dc,...bj->...ijc", J, dG, J, J)
               + np.einsum("...ai,...ab,...bjc->...ijc", J, G, H))
        return gt, dgt


def pullback_tensor(fmap, K: TensorField, x):
    """``(f^* K)(x) = J^{-1} K(f x) J``."""
    J = fmap.jacobian(x)
    return np.linalg.solve(J, K.value(fmap.apply(x)) @ J)


def strength_of_map(g: MetricField, fmap, x):
    """g-strength of ``f^* g`` at ``x``."""
    return strength_from_matrices(g.value(x), PullbackMetric(g, fmap).value(x))


def compute_Kt(g: MetricField, flow, t: float, x) -> np.ndarray:
    """``K_t(x)``: g-strength of the pulled-back metric ``(phi^t)^* g``."""
    if t == 0:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(g.dim), x.shape[:-1] + (g.dim, g.dim)).copy()
    return strength_of_map(g, MapAt(flow, t), x)


def kt_field(g: MetricField, flow, t: float) -> GStrengthField:
    return GStrengthField(g, PullbackMetric(g, flow, t))


def transport_K(g: MetricField, flow, t: float, K: TensorField, x) -> np.ndarray:
    """``L_t(K)(x) = ((phi^t)^* K)(x) . K_t(x)``."""
    if t == 0:
        return K.value(x)
    fmap = MapAt(flow, t)
    return pullback_tensor(fmap, K, x) @ strength_of_map(g, fmap, x)


class TransportedField(TensorField):
    """``L_t(K)`` as a tensor field (derivatives by the central-difference layer)."""

    def __init__(self, g, flow, t, K):
        self.g, self.flow, self.t, self.K = g, flow, float(t), K
        self.dim = g.dim

    def value(self, x):
        return transport_K(self.g, self.flow, self.t, self.K, x)

    def jet1(self, x):
        from .geom import fd_layer
        return self.value(x), fd_layer(self.value, x, self.dim)


# --------------------------------------------------------------------------
# Moebius maps

def mobius_apply(alpha: complex, beta: complex, z):
    """``T(z) = (alpha z + beta)/z`` on the Riemann sphere (``T(0) = inf``, ``T(inf) = alpha``)."""
    if alpha == 0 and beta == 0:
        raise ValueError("(alpha, beta) must not both vanish")
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (alpha * z + beta) / z
    out = np.where(np.isinf(z), alpha, out)
    out = np.where(z == 0, np.inf, out)
    return out if out.ndim else complex(out)


def mobius_fixed(alpha: float, beta: float) -> list:
    """Fixed points of ``T``: roots of ``z^2 - alpha z - beta`` with multiplicity."""
    if alpha == 0 and beta == 0:
        raise ValueError("(alpha, beta) must not both vanish")
    disc = complex(alpha * alpha + 4 * beta)
    r = np.sqrt(disc)
    roots = [(alpha + r) / 2, (alpha - r) / 2]
    return [complex(z).real if abs(complex(z).imag) <= 1e-14 * max(1, abs(z)) else complex(z) for z in roots]


def mobius_from_fixed_set(spec) -> tuple | None:
    """Normalized ``(alpha, beta)`` whose fixed points are the distinct values in ``spec``.

    One value ``r`` gives the parabolic map ``(2r z - r^2)/z``; two values
    ``r1, r2`` give ``alpha = r1 + r2``, ``beta = -r1 r2``.  More than two
    distinct values admit no such map (returns None).
    """
    vals = _distinct(np.asarray(spec, dtype=complex))
    if len(vals) == 1:
        r = vals[0]
        a, b = 2 * r, -r * r
    elif len(vals) == 2:
        a, b = vals[0] + vals[1], -vals[0] * vals[1]
    else:
        return None
    a, b = complex(a), complex(b)
    if abs(a.imag) <= 1e-12 and abs(b.imag) <= 1e-12:
        return a.real, b.real
    return a, b


def _distinct(z, tol=1e-6):
    out = []
    for v in z:
        if all(abs(v - u) > tol * max(1.0, abs(u)) for u in out):
            out.append(v)
    return out


# --------------------------------------------------------------------------
# L_t on a basis

def classify_matrix(L, tol: float = 1e-6) -> str:
    """Classify a one-parameter-group element by its normalized spectrum.

    ``L`` is scaled to unit ``|det|``; returns ``trivial`` (identity),
    ``parabolic`` (single eigenvalue, not the identity), ``elliptic``
    (non-real eigenvalues) or ``hyperbolic`` (distinct real eigenvalues).
    """
    L = np.asarray(L, dtype=float)
    D = L.shape[0]
    det = np.linalg.det(L)
    if det == 0:
        raise ValueError("L is singular")
    Ln = L / abs(det) ** (1.0 / D)
    I = np.eye(D)
    if np.max(np.abs(Ln - I)) <= tol:
        return "trivial"
    mu = np.trace(Ln) / D
    N = Ln - mu * I
    if np.max(np.abs(np.linalg.matrix_power(N, D))) <= tol * max(1.0, np.max(np.abs(Ln))) ** D:
        return "parabolic"
    ev = np.linalg.eigvals(Ln)
    if np.any(np.abs(ev.imag) > tol):
        return "elliptic"
    return "hyperbolic"


def classify_mobius(alpha, beta, tol: float = 1e-6) -> str:
    """Class of ``T(z) = (alpha z + beta)/z`` from the roots of ``z^2 - alpha z - beta``.

    Non-real pair -> ``elliptic``, real double root -> ``parabolic``,
    distinct real roots -> ``hyperbolic``.  The discriminant is compared
    against ``tol`` relative to ``alpha^2``.
    """
    alpha, beta = complex(alpha), complex(beta)
    if abs(alpha.imag) > tol or abs(beta.imag) > tol:
        return "elliptic"
    a, b = alpha.real, beta.real
    disc = a * a + 4 * b
    if abs(disc) <= tol * max(1.0, a * a):
        return "parabolic"
    return "hyperbolic" if disc > 0 else "elliptic"


def _fit(basis_vals, target_vals):
    """Least-squares coefficients of ``target`` in the span of ``basis`` (sampled, flattened)."""
    B = np.stack([b.reshape(-1) for b in basis_vals], -1)
    y = target_vals.reshape(-1)
    c, *_ = np.linalg.lstsq(B, y, rcond=None)
    return c, float(np.max(np.abs(B @ c - y))), float(np.linalg.cond(B))


def lt_matrix_values(g, flow, t, basis: Sequence[TensorField], points):
    vals = [b.value(points) for b in basis]
    cols, res = [], 0.0
    cond = None
    for b in basis:
        c, r, cond = _fit(vals, transport_K(g, flow, t, b, points))
        cols.append(c)
        res = max(res, r)
    return np.stack(cols, -1), res, cond


@dataclass
class OneParamRecord:
    t0: float
    basis: list
    matrix: np.ndarray
    fit_residual: float
    classification: str
    matrix_classification: str
    alpha: float | None
    beta: float | None
    mobius_source: str  # "pair" | "fixed-set" | "none"
    fixed_points: list
    kbar_origin_spectrum: list
    pair_fit: dict
    fixes_identity_line: bool
    basis_fields: list = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "basis": list(self.basis),
            "matrix": np.asarray(self.matrix).tolist(),
            "fit_residual": self.fit_residual,
            "classification": self.classification,
            "matrix_classification": self.matrix_classification,
            "alpha": self.alpha,
            "beta": self.beta,
            "mobius_source": self.mobius_source,
            "mobius_fixed_points": [_cplx(z) for z in self.fixed_points],
            "kbar_origin_spectrum": [_cplx(z) for z in self.kbar_origin_spectrum],
            "pair_fit": self.pair_fit,
            "fixes_identity_line": self.fixes_identity_line,
        }


def _cplx(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


class FitError(ValueError):
    pass


def lt_matrix(g: MetricField, flow, t0: float, points, basis: Sequence[TensorField] | None = None,
              basis_names: Sequence[str] | None = None, fit_tol: float = 1e-5,
              class_tol: float = 1e-6, origin=None) -> OneParamRecord:
    """Matrix of ``L_t0`` on a basis of BM structures, its class and Moebius map.

    With ``basis=None`` the pair ``{Kbar, Id}`` is used (``Kbar = K_t0``);
    then ``alpha, beta`` are read off the matrix.  For a larger basis (e.g.
    a full mobility basis) the Moebius map is the normalized map whose fixed
    set is ``Spec(Kbar(o))``, and the least-squares pair fit is reported
    alongside with its residual.

    ``classification`` is the class of the Moebius matrix
    ``[[alpha, 1], [beta, 0]]``; ``matrix_classification`` is the class of the
    full matrix of ``L_t0`` on the given basis (which can carry extra
    rotation modes when the basis is larger than the pair).  When ``Kbar``
    is a multiple of ``Id`` and ``L_t0`` acts trivially, both read
    ``trivial``.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 50:
        raise ValueError("lt_matrix needs at least 50 sample points")
    n = g.dim
    o = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
    Kbar = kt_field(g, flow, t0)
    Id = identity_field(n)
    kb_vals = Kbar.value(points)
    # pair fit: L(Kbar) ~ alpha Kbar + beta Id
    c, pres, pcond = _fit([kb_vals, Id.value(points)], transport_K(g, flow, t0, Kbar, points))
    pair_fit = {"alpha": float(c[0]), "beta": float(c[1]), "residual": pres}
    _, idres, _ = _fit([Id.value(points)], kb_vals)
    fixes_id = idres <= fit_tol
    spec_o = np.linalg.eigvals(Kbar.value(o))
    if basis is None and fixes_id:
        # Kbar = r Id: the pair is degenerate; L_t0 acts on span{Id} by r
        basis = [Id]
        basis_names = ["Id"]
        M = np.array([[np.mean(kb_vals[..., range(n), range(n)])]])
        res, cond = idres, 1.0
    elif basis is None:
        basis = [Kbar, Id]
        basis_names = ["Kbar", "Id"]
        M = np.array([[c[0], 1.0], [c[1], 0.0]])
        res, cond = pres, pcond
    else:
        basis_names = list(basis_names or [f"B{i}" for i in range(len(basis))])
        M, res, cond = lt_matrix_values(g, flow, t0, basis, points)
    if cond > 1e10:
        raise FitError(f"basis is numerically dependent on the samples (cond {cond:.2e})")
    if res > fit_tol:
        raise FitError(f"fit residual {res:.3e} exceeds {fit_tol:.1e}: basis not invariant under L_t")
    mcls = classify_matrix(M, class_tol)
    if len(basis) == 1:
        alpha, beta, src = None, None, "none"
    elif len(basis) == 2 and basis_names == ["Kbar", "Id"]:
        alpha, beta, src = float(M[0, 0]), float(M[1, 0]), "pair"
    else:
        ab = mobius_from_fixed_set(spec_o)
        alpha, beta, src = (ab[0], ab[1], "fixed-set") if ab is not None else (None, None, "none")
    fixed = mobius_fixed(alpha, beta) if alpha is not None and np.isrealobj(alpha) else []
    if mcls == "trivial" or alpha is None:
        cls = mcls
    else:
        cls = classify_mobius(alpha, beta, class_tol)
    return OneParamRecord(float(t0), basis_names, M, res, cls, mcls, alpha, beta, src, fixed,
                          sorted(spec_o.tolist(), key=lambda z: (z.real, z.imag)), pair_fit, bool(fixes_id),
                          list(basis))


def group_law_residual(g, flow, t: float, s: float, basis: Sequence[TensorField], points) -> float:
    """``max |M(t+s) - M(t) M(s)|`` for the matrices of ``L`` on ``basis``."""
    Mt, _, _ = lt_matrix_values(g, flow, t, basis, points)
    Ms, _, _ = lt_matrix_values(g, flow, s, basis, points)
    Mts, _, _ = lt_matrix_values(g, flow, t + s, basis, points)
    return float(np.max(np.abs(Mts - Mt @ Ms)))


# --------------------------------------------------------------------------
# Spectral transport

@dataclass
class SpectralReport:
    passed: bool
    max_dist: float
    distances: np.ndarray
    origin_invariance: float
    skipped: int


def match_spectra(a, b) -> float:
    """Max distance under the optimal (Hungarian) matching of two multisets in C."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    C = np.abs(a[:, None] - b[None, :])
    C = np.where(np.isfinite(C), C, 1e300)
    r, c = linear_sum_assignment(C)
    return float(np.max(C[r, c]))


def spectral_transport_check(g: MetricField, flow, t0: float, alpha, beta, points, tol: float = 1e-5,
                             compare_t: float | None = None, origin=None) -> SpectralReport:
    """Compare ``T(Spec Kbar(x))`` with ``Spec Kbar(phi^{t} x)`` (``t = t0`` unless overridden)."""
    if alpha is None:
        raise ValueError("no Moebius map available for this record")
    points = np.asarray(points, dtype=float)
    tc = t0 if compare_t is None else compare_t
    Kbar = kt_field(g, flow, t0)
    n = g.dim
    o = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
    so = np.linalg.eigvals(Kbar.value(o))
    inv_o = match_spectra(mobius_apply(alpha, beta, so), so)
    dists, skipped = [], 0
    for x in points:
        try:
            s1 = np.linalg.eigvals(Kbar.value(x))
            s2 = np.linalg.eigvals(Kbar.value(flow.apply(tc, x)))
        except (np.linalg.LinAlgError, DomainError):
            skipped += 1
            continue
        dists.append(match_spectra(mobius_apply(alpha, beta, s1), s2))
    d = np.array(dists)
    md = float(d.max()) if d.size else float("nan")
    return SpectralReport(bool(d.size and md <= tol), md, d, inv_o, skipped)


# --------------------------------------------------------------------------
# psi-tau identity

def _richardson(f, s, h):
    d1 = (f(s + h) - f(s - h)) / (2 * h)
    d2 = (f(s + h / 2) - f(s - h / 2)) / h
    return (4 * d2 - d1) / 3


@dataclass
class PsiTauReport:
    passed: bool
    sup_err: float
    s: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    tau: np.ndarray
    dtau: np.ndarray
    half_dlog_dtau: np.ndarray
    dlog_dtau_at_0: float | None


def psi_tau_check(g: MetricField, flow, t0: float, curve: GeodesicCurve, s=None, h: float = 1e-3,
                  tol: float = 1e-4) -> PsiTauReport:
    """Check ``dpsi/ds = 1/2 d/ds log(dtau/ds)`` along a flow-invariant geodesic.

    ``psi(s) = -1/2 log |det K_t0(gamma(s))|``, ``tau`` is the reparametrization
    with ``phi^t0(gamma(s)) = gamma(tau(s))``.  Both derivatives in ``s`` are
    Richardson-extrapolated central differences.
    """
    lo, hi = curve.s_range
    if s is None:
        s = invariant_parameters(flow, curve, t0, np.linspace(lo + 2 * h, hi - 2 * h, 41), margin=2 * h)
    s = np.asarray(s, dtype=float)

    def psi(ss):
        ss = np.atleast_1d(ss)
        K = compute_Kt(g, flow, t0, curve.position(ss))
        return -0.5 * np.log(np.abs(np.linalg.det(K)))

    def logdtau(ss):
        r = extract_reparam(flow, curve, t0, np.atleast_1d(ss))
        return np.log(r.dtau)

    base = extract_reparam(flow, curve, t0, s)
    dpsi = _richardson(psi, s, h)
    half = 0.5 * _richardson(logdtau, s, h)
    err = float(np.max(np.abs(dpsi - half)))
    at0 = None
    if lo + h < 0.0 < hi - h:
        at0 = float(_richardson(logdtau, np.array([0.0]), h)[0])
    return PsiTauReport(err <= tol, err, s, psi(s), dpsi, base.tau, base.dtau, half, at0)


# --------------------------------------------------------------------------
# Non-affinity of pulled-back connections

def eta_t(g: MetricField, flow, t: float, x=None) -> np.ndarray:
    """``eta_t(x)`` with ``nabla_t = nabla + eta_t (x) Id + Id (x) eta_t``; ``x`` defaults to the origin."""
    x = np.zeros(g.dim) if x is None else np.asarray(x, dtype=float)
    pd = projective_diff(LeviCivita(g), LeviCivita(PullbackMetric(g, flow, t)), x, tol=1e-6)
    if not pd.success:
        raise ValueError(f"pulled-back connection is not projectively equivalent (residual {pd.residual:.2e})")
    return pd.eta
