"""Geodesic integration, geodesic-image comparison and flow reparametrizations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .exprcore import DomainError
from .geom import ChartDomain, Connection


class NotInvariantError(DomainError):
    """The flow moves points of the curve off its image."""


@dataclass
class GeodesicCurve:
    """Geodesic with a cubic-Hermite dense output.

    ``s``, ``X`` and ``V`` are the integrator's accepted nodes.  ``left_chart``
    is True when integration stopped at the chart boundary before the end
    of the requested range.
    """

    conn: Connection = field(repr=False)
    s: np.ndarray
    X: np.ndarray
    V: np.ndarray
    left_chart: bool = False

    def __post_init__(self):
        acc = -np.einsum("nkij,ni,nj->nk", self.conn.gamma(self.X), self.V, self.V)
        self.A = acc
        self._pos = CubicHermiteSpline(self.s, self.X, self.V, axis=0)
        self._vel = CubicHermiteSpline(self.s, self.V, acc, axis=0)

    @property
    def s_range(self):
        return float(self.s[0]), float(self.s[-1])

    def position(self, s):
        return self._pos(s)

    def velocity(self, s):
        return self._vel(s)

    def residual(self) -> float:
        """Max geodesic-equation defect of the dense output at nodes and midpoints."""
        sm = np.concatenate([self.s, 0.5 * (self.s[1:] + self.s[:-1])])
        X, V = self._pos(sm), self._vel(sm)
        acc = self._vel.derivative()(sm)
        G = self.conn.gamma(X)
        return float(np.max(np.linalg.norm(acc + np.einsum("nkij,ni,nj->nk", G, V, V), axis=-1)))

    def dense(self, m: int = 2000):
        ss = np.linspace(self.s[0], self.s[-1], m)
        return ss, self._pos(ss)


def integrate_geodesic(conn: Connection, x0, v0, s_range=(0.0, 1.0), chart: ChartDomain | None = None,
                       rtol: float = 1e-9, atol: float = 1e-12, max_step: float | None = None) -> GeodesicCurve:
    """Integrate ``x'' + Gamma(x', x') = 0`` with adaptive RK45.

    Integration stops (``left_chart=True``) when the curve leaves ``chart``.
    Both directions are supported: ``s_range`` may straddle 0.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = conn.dim
    if chart is not None and not chart.contains(x0):
        raise DomainError("initial point outside the chart", x0)

    def rhs(s, y):
        x, v = y[:n], y[n:]
        G = conn.gamma(x)
        return np.concatenate([v, -np.einsum("kij,i,j->k", G, v, v)])

    events = []
    if chart is not None:
        lo, hi = np.array(chart.lo), np.array(chart.hi)

        def exit_event(s, y):
            x = y[:n]
            m = min(np.min(x - lo), np.min(hi - x))
            if chart.exclusion is not None:
                from .exprcore import evaluate
                m = min(m, float(evaluate(chart.exclusion, x, chart.params)))
            return m

        exit_event.terminal = True
        exit_event.direction = -1
        events.append(exit_event)

    s0, s1 = float(s_range[0]), float(s_range[1])
    span = s1 - s0
    ms = max_step if max_step is not None else span / 200.0
    y0 = np.concatenate([x0, v0])
    pieces, left = [], False
    for end in (s0, s1):
        if end == 0.0:
            continue
        sol = solve_ivp(rhs, (0.0, end), y0, method="RK45", rtol=rtol, atol=atol, max_step=ms, events=events)
        if sol.status == -1:
            raise DomainError(f"geodesic integration failed: {sol.message}", x0)
        left |= sol.status == 1
        pieces.append((sol.t, sol.y.T))
    if not pieces:
        raise ValueError("empty parameter range")
    ss, ys = [], []
    for t, y in pieces:
        if t[-1] < 0:
            t, y = t[::-1], y[::-1]
        ss.append(t)
        ys.append(y)
    s = np.concatenate(ss)
    y = np.concatenate(ys)
    s, idx = np.unique(s, return_index=True)
    y = y[idx]
    if len(s) < 2:
        raise DomainError("geodesic left the chart immediately", x0)
    return GeodesicCurve(conn, s, y[:, :n], y[:, n:], bool(left))


def _dist_to_polyline(P, Q):
    """Distance from each point of ``P`` to the polyline through ``Q``."""
    A, B = Q[:-1], Q[1:]
    d = B - A
    L2 = np.einsum("ij,ij->i", d, d)
    L2 = np.where(L2 == 0, 1.0, L2)
    out = np.empty(len(P))
    for i, p in enumerate(P):
        u = np.clip(np.einsum("ij,ij->i", p - A, d) / L2, 0.0, 1.0)
        out[i] = np.min(np.linalg.norm(A + u[:, None] * d - p, axis=1))
    return out


@dataclass
class SharesReport:
    trials: int
    passed: int
    max_distance: list

    @property
    def all_pass(self):
        return self.passed == self.trials

    @property
    def pass_fraction(self):
        return self.passed / self.trials if self.trials else 1.0


def shares_geodesics(conn1: Connection, conn2: Connection, chart: ChartDomain, trials: int = 20,
                     seed: int = 0, tol: float = 1e-5, s_max: float = 0.5,
                     shrink: float = 0.5) -> SharesReport:
    """Compare geodesic images of two connections from common initial data.

    Both geodesics start at a random point of the shrunk chart with a random
    unit velocity and run for parameter ``s_max`` or until they leave the
    chart.  The image of the shorter of the two (in chart arclength) must stay
    within ``tol`` of the other.
    """
    rng = np.random.default_rng(seed)
    pts = chart.sample(trials, seed=seed, shrink=shrink)
    passed, dists = 0, []
    for x0 in pts:
        v0 = rng.normal(size=chart.dim)
        v0 /= np.linalg.norm(v0)
        c1 = integrate_geodesic(conn1, x0, v0, (0.0, s_max), chart)
        c2 = integrate_geodesic(conn2, x0, v0, (0.0, s_max), chart)
        _, P1 = c1.dense(1500)
        _, P2 = c2.dense(1500)
        l1 = np.sum(np.linalg.norm(np.diff(P1, axis=0), axis=1))
        l2 = np.sum(np.linalg.norm(np.diff(P2, axis=0), axis=1))
        short, long_ = (P1, P2) if l1 <= l2 else (P2, P1)
        d = float(np.max(_dist_to_polyline(short[::10], long_)))
        dists.append(d)
        passed += d <= tol
    return SharesReport(trials, passed, dists)


# --------------------------------------------------------------------------
# Reparametrization along flow-invariant geodesics

@dataclass
class ReparamFn:
    """``tau`` with ``phi^t(gamma(s)) = gamma(tau(s))`` on a sample table."""

    s: np.ndarray
    tau: np.ndarray
    dtau: np.ndarray
    t: float
    max_offset: float
    curve: GeodesicCurve = field(repr=False)
    flow: object = field(repr=False)

    def __call__(self, s):
        return reparam_tau(self.flow, self.curve, self.t, s)[0]


def _project(curve: GeodesicCurve, p: np.ndarray, guess: float, iters: int = 10):
    """Nearest-point parameter on ``curve`` for point ``p`` (Newton on the normal condition)."""
    lo, hi = curve.s_range
    tau = guess
    for _ in range(iters):
        x, v = curve.position(tau), curve.velocity(tau)
        acc = curve._vel.derivative()(tau)
        r = x - p
        f = r @ v
        fp = v @ v + r @ acc
        step = f / fp
        tau = float(np.clip(tau - step, lo, hi))
        if abs(step) < 1e-15 * max(1.0, abs(tau)):
            break
    return tau, float(np.linalg.norm(curve.position(tau) - p))


def reparam_tau(flow, curve: GeodesicCurve, t: float, s):
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    ss, P = curve.dense(4000)
    taus, offs = [], []
    for si in s_arr:
        p = flow.apply(t, curve.position(si))
        k = int(np.argmin(np.linalg.norm(P - p, axis=1)))  # bracket on the stored grid
        tau, off = _project(curve, p, float(ss[k]))
        taus.append(tau)
        offs.append(off)
    return np.array(taus), np.array(offs)


def extract_reparam(flow, curve: GeodesicCurve, t: float, s=None, tol: float = 1e-6) -> ReparamFn:
    """Reparametrization ``tau_t`` induced by a flow preserving the curve's image.

    ``dtau/ds`` comes from the tangent map:
    ``dtau/ds = <gamma'(tau), Dphi gamma'(s)> / |gamma'(tau)|^2``.
    Raises :class:`NotInvariantError` if some image point is farther than
    ``tol`` from the curve.
    """
    if s is None:
        lo, hi = curve.s_range
        s = np.linspace(lo, hi, 41)
    s = np.asarray(s, dtype=float)
    if t == 0:
        return ReparamFn(s, s.copy(), np.ones_like(s), 0.0, 0.0, curve, flow)
    tau, off = reparam_tau(flow, curve, t, s)
    if np.max(off) > tol:
        k = int(np.argmax(off))
        raise NotInvariantError(
            f"flow moves the curve off its image (offset {off[k]:.3e} at s={s[k]:.6g})",
            curve.position(s[k]))
    X = curve.position(s)
    V = curve.velocity(s)
    J = flow.jacobian(t, X)
    Vt = curve.velocity(tau)
    dtau = np.einsum("nk,nkj,nj->n", Vt, J, V) / np.einsum("nk,nk->n", Vt, Vt)
    return ReparamFn(s, tau, dtau, float(t), float(np.max(off)), curve, flow)


def invariant_parameters(flow, curve: GeodesicCurve, t: float, s, margin: float = 0.0,
                         tol: float = 1e-6) -> np.ndarray:
    """Subset of ``s`` whose flow images land on the stored curve, away from its ends."""
    s = np.asarray(s, dtype=float)
    tau, off = reparam_tau(flow, curve, t, s)
    lo, hi = curve.s_range
    keep = (off <= tol) & (tau > lo + margin) & (tau < hi - margin)
    return s[keep]
