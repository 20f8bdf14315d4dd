"""Built-in scenarios.

Each scenario is a plain ``projlab/1`` dict, the same shape a user would
write to a JSON file for ``projlab run``.  Metrics on quadric models are
generated as expression strings from a symmetric ``(n+1)x(n+1)`` matrix
``Q``: the restriction of ``<X, QX>`` to the cone over the affine chart
``X = (1, x)``, projected along the radial direction, is

    g = Q_hat / q - (Q X)_hat (Q X)_hat^T / q^2,    q = <X, Q X>

(``hat`` drops the 0-th row/column), up to an overall sign.  ``Q = I`` is
the unit sphere in the gnomonic (Beltrami) chart; ``Q = diag(1, -1, ..., -1)``
with sign ``-1`` is the curvature ``-1`` hyperbolic space in the Klein
chart.  All of these are projectively flat: their geodesics are straight
chart lines.
"""
from __future__ import annotations

import copy

import numpy as np

SCHEMA_TAG = "projlab/1"


def _num(v: float) -> str:
    v = float(v)
    return repr(v) if v >= 0 else f"({v!r})"


def quadric_metric(Q, sign: float = 1.0) -> list[list[str]]:
    """Component expressions of ``sign`` times the quadric metric for ``Q``."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
        raise ValueError("Q must be a symmetric square matrix")
    n = Q.shape[0] - 1
    X = ["1"] + [f"x{i}" for i in range(1, n + 1)]

    def lin(a):
        terms = [f"{_num(Q[a, b])}*{X[b]}" for b in range(n + 1) if Q[a, b] != 0]
        return "(" + "+".join(terms) + ")" if terms else "0"

    q = "(" + "+".join(f"{_num(Q[a, b])}*{X[a]}*{X[b]}"
                       for a in range(n + 1) for b in range(n + 1) if Q[a, b] != 0) + ")"
    QX = [lin(a) for a in range(n + 1)]
    out = []
    for i in range(1, n + 1):
        row = []
        for j in range(1, n + 1):
            head = f"{_num(Q[i, j])}/{q}" if Q[i, j] != 0 else "0"
            tail = f"{QX[i]}*{QX[j]}/{q}^2" if QX[i] != "0" and QX[j] != "0" else None
            e = f"{head} - {tail}" if tail else head
            row.append(e if sign > 0 else ("0" if e == "0" else f"-({e})"))
        out.append(row)
    return out


def euclidean(n: int) -> list[list[str]]:
    return [["1" if i == j else "0" for j in range(n)] for i in range(n)]


def stereographic_sphere(n: int) -> list[list[str]]:
    """Round unit sphere in stereographic coordinates, ``4/(1+|x|^2)^2 delta``."""
    r2 = "+".join(f"x{i}^2" for i in range(1, n + 1))
    c = f"4/(1+{r2})^2"
    return [[c if i == j else "0" for j in range(n)] for i in range(n)]


def _box(n: int, r: float) -> dict:
    return {"lo": [-r] * n, "hi": [r] * n}


def _nf(A, w) -> dict:
    return {"normal_form": {"A": np.asarray(A, dtype=float).tolist(), "w": [float(v) for v in w]}}


def _rot(n: int, i: int, j: int, theta: float = 1.0) -> np.ndarray:
    A = np.zeros((n, n))
    A[j, i], A[i, j] = theta, -theta
    return A


def _e(n: int, k: int, s: float = 1.0) -> list[float]:
    v = [0.0] * n
    v[k] = s
    return v


def _scenarios() -> list[dict]:
    S2 = quadric_metric(np.eye(3))
    S3 = quadric_metric(np.eye(4))
    H2 = quadric_metric(np.diag([1.0, -1.0, -1.0]), sign=-1.0)
    L2 = quadric_metric(np.array([[1.0, 0, 0], [0, 0, 1], [0, 1, 0]]))
    nonlin2 = _nf(np.zeros((2, 2)), _e(2, 0, -1.0))
    return [
        {
            "name": "flat-basic",
            "description": "Euclidean plane; mobility only (smallest smoke scenario).",
            "dim": 2, "chart": _box(2, 0.5), "metric": euclidean(2),
            "checks": [{"check": "mobility", "degree": 4, "expect": {"dimension": 6, "min_gap": 1e4}}],
        },
        {
            "name": "flat-R2",
            "description": "Euclidean plane: zero curvature, maximal mobility, projective and "
                           "non-projective fields, psi-tau along a geodesic orthogonal to w.",
            "dim": 2, "chart": _box(2, 0.5), "metric": euclidean(2),
            "fields": {"X": nonlin2, "Y": {"components": ["x2", "x1^2"]}},
            "checks": [
                {"check": "metric", "expect": {"positive_index": 2}},
                {"check": "curvature", "expect": {"riemann_zero": True}},
                {"check": "mobility", "degree": 4, "expect": {"dimension": 6, "min_gap": 1e4}},
                {"check": "is_projective", "field": "X", "expect": {"projective": True, "affine": False}},
                {"check": "is_projective", "field": "Y", "expect": {"projective": False, "affine": False}},
                {"check": "flow_exactness", "field": "X", "rational_formula": True},
                {"check": "psi_tau", "field": "X", "t0": 0.5, "direction": [0.0, 1.0],
                 "s_range": [-0.4, 0.4], "expect": {"dlog_dtau_at_0": 0.0}},
            ],
        },
        {
            "name": "flat-R3",
            "description": "Euclidean 3-space: zero projective Weyl tensor, mobility 10.",
            "dim": 3, "chart": _box(3, 0.5), "metric": euclidean(3),
            "checks": [
                {"check": "metric", "expect": {"positive_index": 3}},
                {"check": "curvature", "expect": {"riemann_zero": True, "weyl_zero": True}},
                {"check": "weyl_invariance", "forms": 3, "samples": 50},
                {"check": "mobility", "degree": 4, "expect": {"dimension": 10, "min_gap": 1e4}},
            ],
        },
        {
            "name": "beltrami-S2",
            "description": "Unit sphere in the gnomonic chart: projectively flat, Ric = g, "
                           "mobility 6, BM structures from projective fields.",
            "dim": 2, "chart": _box(2, 0.5), "metric": S2,
            "fields": {"X": nonlin2, "R": _nf(_rot(2, 0, 1), [0.0, 0.0])},
            "checks": [
                {"check": "metric", "expect": {"positive_index": 2}},
                {"check": "curvature", "expect": {"ricci_factor": 1.0}},
                {"check": "projective_diff", "other": "flat", "expect": True},
                {"check": "shares_geodesics", "other": "flat", "trials": 4, "expect": True},
                {"check": "shares_geodesics", "other": {"metric": stereographic_sphere(2)}, "trials": 3,
                 "expect": False},
                {"check": "geodesics", "trials": 4},
                {"check": "weyl_invariance", "forms": 3, "samples": 50},
                {"check": "mobility", "degree": 6, "expect": {"dimension": 6, "min_gap": 1e4}},
                {"check": "is_projective", "field": "X", "expect": {"projective": True, "affine": False}},
                {"check": "is_projective", "field": "R", "expect": {"projective": True, "affine": True}},
                {"check": "bm_from_field", "field": "X", "samples": 100},
                {"check": "bm_from_field", "field": "R", "samples": 100, "expect": {"zero": True}},
                {"check": "ordering", "strength_of": "flat", "expect": {"ordered": True}},
                {"check": "splitting", "strength_of": "flat", "point": [0.2, -0.1]},
            ],
        },
        {
            "name": "beltrami-S3",
            "description": "Unit 3-sphere in the gnomonic chart: constant curvature, W = 0, mobility 10.",
            "dim": 3, "chart": _box(3, 0.5), "metric": S3,
            "checks": [
                {"check": "metric", "expect": {"positive_index": 3}},
                {"check": "curvature", "expect": {"ricci_factor": 2.0, "weyl_zero": True}},
                {"check": "weyl_invariance", "forms": 3, "samples": 50},
                {"check": "mobility", "degree": 4, "expect": {"dimension": 10, "min_gap": 1e4}},
            ],
        },
        {
            "name": "hyperbolic-ball-2",
            "description": "Hyperbolic plane in the Klein chart: Ric = -g, projectively flat, mobility 6.",
            "dim": 2, "chart": _box(2, 0.5), "metric": H2,
            "checks": [
                {"check": "metric", "expect": {"positive_index": 2}},
                {"check": "curvature", "expect": {"ricci_factor": -1.0}},
                {"check": "projective_diff", "other": "flat", "expect": True},
                {"check": "weyl_invariance", "forms": 3, "samples": 50},
                {"check": "mobility", "degree": 6, "expect": {"dimension": 6, "min_gap": 1e4}},
            ],
        },
        {
            "name": "perturbed-generic-2",
            "description": "Generic perturbation of the Euclidean plane: only constant multiples of Id "
                           "are BM structures.",
            "dim": 2, "chart": _box(2, 0.5),
            "metric": [["1 + 0.3*sin(x2)", "0"], ["0", "1 + 0.2*x1^2"]],
            "checks": [
                {"check": "metric", "expect": {"positive_index": 2}},
                {"check": "curvature", "expect": {"riemann_zero": False}},
                {"check": "projective_diff", "other": "flat", "expect": False},
                {"check": "weyl_invariance", "forms": 3, "samples": 50},
                {"check": "mobility", "degree": 4, "expect": {"dimension": 1, "min_gap": 1e4}},
            ],
        },
        {
            "name": "perturbed-generic-3",
            "description": "Euclidean 3-space with the dx1^2 coefficient modulated along x2: not "
                           "projectively flat (W != 0), so Weyl invariance is tested on a non-zero tensor.",
            "dim": 3, "chart": _box(3, 0.5),
            "metric": [["1 + 0.3*sin(x2)", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
            "checks": [
                {"check": "metric", "expect": {"positive_index": 3}},
                {"check": "curvature", "expect": {"riemann_zero": False, "weyl_zero": False}},
                {"check": "weyl_invariance", "forms": 10, "samples": 50},
            ],
        },
        {
            "name": "nonlin-parabolic-riemannian",
            "description": "Non-linearizable projective field (A = 0, w = -e1) on the gnomonic sphere "
                           "chart: the induced group L_t on BM structures is parabolic with Moebius map "
                           "(2z - 1)/z and K_t0(o) = Id.  Spectral transport by that map needs "
                           "span{Kbar, Id} to be L_t-invariant; with D = 6 it is not, and the "
                           "spectral_transport check fails on this chart.",
            "dim": 2, "chart": _box(2, 0.5), "metric": S2,
            "fields": {"X": nonlin2},
            "checks": [
                {"check": "linearizable", "field": "X", "expect": False},
                {"check": "is_projective", "field": "X", "expect": {"projective": True, "affine": False}},
                {"check": "lt_matrix", "field": "X", "t0": 0.5, "basis": {"mobility_degree": 6},
                 "expect": {"classification": "parabolic", "alpha": 2.0, "beta": -1.0,
                            "fixes_identity_line": False}},
                {"check": "eta_origin", "field": "X", "times": [0.1, 0.5, 1.0]},
                {"check": "spectral_transport", "field": "X", "t0": 0.5, "basis": {"mobility_degree": 6},
                 "samples": 100, "negative_control_t": 1.0},
            ],
        },
        {
            "name": "nonlin-flat-model",
            "description": "Euclidean 3-space with the non-linearizable field A = rotation of the "
                           "(x2, x3) plane, w = -e1; closed-form flow e^{tA}x/(1 + t x1), invariant "
                           "geodesic along e1.",
            "dim": 3, "chart": _box(3, 0.5), "metric": euclidean(3),
            "fields": {"X": _nf(_rot(3, 1, 2), _e(3, 0, -1.0))},
            "checks": [
                {"check": "linearizable", "field": "X", "expect": False},
                {"check": "is_projective", "field": "X", "expect": {"projective": True, "affine": False}},
                {"check": "flow_exactness", "field": "X", "rational_formula": True},
                {"check": "psi_tau", "field": "X", "t0": 0.5, "direction": [1.0, 0.0, 0.0],
                 "s_range": [-0.4, 0.4], "expect": {"dlog_dtau_at_0": -1.0}},
                {"check": "lt_matrix", "field": "X", "t0": 0.5, "basis": {"mobility_degree": 2},
                 "expect": {"classification": "parabolic", "alpha": 2.0, "beta": -1.0,
                            "fixes_identity_line": False}},
                {"check": "eta_origin", "field": "X", "times": [0.1, 0.5, 1.0]},
            ],
        },
        {
            "name": "nonlin-parabolic-lorentzian",
            "description": "Lorentzian quadric chart (q = 1 + 2 x1 x2) with the field A = 0, w = -e1: "
                           "here {Kbar, Id} spans an L_t-invariant plane, the pair fit is exact and "
                           "spectra are transported by (2z - 1)/z.",
            "dim": 2, "chart": _box(2, 0.3), "metric": L2,
            "fields": {"X": nonlin2},
            "checks": [
                {"check": "metric", "expect": {"positive_index": 1}},
                {"check": "linearizable", "field": "X", "expect": False},
                {"check": "is_projective", "field": "X", "expect": {"projective": True, "affine": False}},
                {"check": "lt_matrix", "field": "X", "t0": 0.5, "basis": "pair",
                 "expect": {"classification": "parabolic", "alpha": 2.0, "beta": -1.0,
                            "fixes_identity_line": False}},
                {"check": "spectral_transport", "field": "X", "t0": 0.5, "basis": "pair",
                 "samples": 100, "negative_control_t": 1.0},
            ],
        },
    ]


def catalog() -> list[dict]:
    """All built-in scenarios (fresh copies, ``schema`` and ``seed`` filled in)."""
    out = []
    for s in _scenarios():
        s = copy.deepcopy(s)
        s = {"schema": SCHEMA_TAG, "seed": 0, **s}
        out.append(s)
    return out


def get(name: str) -> dict:
    for s in catalog():
        if s["name"] == name:
            return s
    raise KeyError(f"no built-in scenario named {name!r}")


def names() -> list[str]:
    return [s["name"] for s in _scenarios()]
