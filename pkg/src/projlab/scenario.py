"""Scenario files: validation, construction and the named checks.

A scenario is a JSON document tagged ``"schema": "projlab/1"`` that names a
chart, a metric (and optionally a connection override), some vector fields
and an ordered list of checks.  :func:`run_scenario` executes the checks
and returns a report dict plus CSV tables; :func:`write_outputs` writes
them with deterministic formatting.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import scipy.linalg

from . import bm, geodesic, geom, projfield, transport
from .catalog import SCHEMA_TAG, euclidean
from .exprcore import DomainError, ExprError, ExprSyntaxError, parse_expr

REPORT_TAG = "projlab-report/1"


class ScenarioError(ValueError):
    """The scenario is malformed (schema, parse or consistency problem)."""


# --------------------------------------------------------------------------
# Schemas

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 2}
_MAT = {"type": "array", "items": _VEC, "minItems": 2}
_STR_GRID = {"type": "array", "items": {"type": "array", "items": {"type": "string"}}, "minItems": 2}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "projlab scenario",
    "type": "object",
    "required": ["schema", "name", "dim", "chart", "metric", "checks"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9][A-Za-z0-9_.-]*$"},
        "description": {"type": "string"},
        "dim": {"type": "integer", "minimum": 2, "maximum": 6},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object", "additionalProperties": _NUM},
        "chart": {
            "type": "object",
            "required": ["lo", "hi"],
            "additionalProperties": False,
            "properties": {"lo": _VEC, "hi": _VEC, "exclusion": {"type": ["string", "null"]}},
        },
        "metric": _STR_GRID,
        "connection": {
            "type": "object",
            "required": ["christoffel"],
            "additionalProperties": False,
            "properties": {"christoffel": {"type": "array", "items": _STR_GRID}},
        },
        "fields": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [
                    {"type": "object", "required": ["normal_form"], "additionalProperties": False,
                     "properties": {"normal_form": {
                         "type": "object", "required": ["A", "w"], "additionalProperties": False,
                         "properties": {"A": _MAT, "w": _VEC}}}},
                    {"type": "object", "required": ["components"], "additionalProperties": False,
                     "properties": {"components": {"type": "array", "items": {"type": "string"},
                                                   "minItems": 2}}},
                ]
            },
        },
        "checks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["check"],
                "properties": {"check": {"type": "string"}},
            },
        },
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "projlab report",
    "type": "object",
    "required": ["schema", "scenario", "seed", "tol_scale", "pass", "exit_code", "checks"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": REPORT_TAG},
        "scenario": {"type": "string"},
        "seed": {"type": "integer"},
        "tol_scale": {"type": "number"},
        "pass": {"type": "boolean"},
        "exit_code": {"enum": [0, 1, 3]},
        "domain_error": {
            "type": "object",
            "required": ["check", "message", "point"],
            "properties": {
                "check": {"type": "string"},
                "message": {"type": "string"},
                "point": {"type": ["array", "null"], "items": {"type": ["number", "null"]}},
            },
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "check", "pass", "result", "tables"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "check": {"type": "string"},
                    "pass": {"type": "boolean"},
                    "error": {"type": "string"},
                    "params": {"type": "object"},
                    "result": {"type": "object"},
                    "tables": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}


# --------------------------------------------------------------------------
# Construction

@dataclass
class Context:
    name: str
    dim: int
    seed: int
    tol_scale: float
    chart: geom.ChartDomain
    metric: geom.ExprMetric
    conn: geom.Connection
    params: dict
    fields: dict = field(default_factory=dict)


def _parse_grid(grid, n, params, what):
    try:
        return [[parse_expr(s, n, params) for s in row] for row in grid]
    except ExprSyntaxError as e:
        raise ScenarioError(f"{what}: {e}") from e


def validate(scn: dict) -> None:
    """Schema validation plus dimension consistency; raises :class:`ScenarioError`."""
    try:
        jsonschema.validate(scn, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {loc}: {e.message}") from e
    n = scn["dim"]
    ch = scn["chart"]
    if len(ch["lo"]) != n or len(ch["hi"]) != n:
        raise ScenarioError(f"chart bounds must have length {n}")
    if any(len(r) != n for r in scn["metric"]) or len(scn["metric"]) != n:
        raise ScenarioError(f"metric must be {n}x{n}")
    if "connection" in scn:
        G = scn["connection"]["christoffel"]
        if len(G) != n or any(len(r) != n or any(len(c) != n for c in r) for r in G):
            raise ScenarioError(f"christoffel symbols must be {n}x{n}x{n}")
    for name, f in scn.get("fields", {}).items():
        if "normal_form" in f:
            A, w = f["normal_form"]["A"], f["normal_form"]["w"]
            if len(A) != n or any(len(r) != n for r in A) or len(w) != n:
                raise ScenarioError(f"field {name!r}: A must be {n}x{n} and w of length {n}")
        elif len(f["components"]) != n:
            raise ScenarioError(f"field {name!r}: expected {n} components")
    names = set(scn.get("fields", {}))
    for i, c in enumerate(scn["checks"]):
        spec = CHECKS.get(c["check"])
        if spec is None:
            raise ScenarioError(f"checks/{i}: unknown check {c['check']!r}; known: {sorted(CHECKS)}")
        extra = set(c) - {"check"} - set(spec.params)
        if extra:
            raise ScenarioError(f"checks/{i} ({c['check']}): unknown parameters {sorted(extra)}")
        if "field" in spec.params:
            if "field" not in c:
                raise ScenarioError(f"checks/{i} ({c['check']}): 'field' is required")
            if c["field"] not in names:
                raise ScenarioError(f"checks/{i} ({c['check']}): no field named {c['field']!r}")


def build(scn: dict, seed: int | None = None, tol_scale: float = 1.0) -> Context:
    validate(scn)
    n = scn["dim"]
    params = {k: float(v) for k, v in scn.get("params", {}).items()}
    try:
        excl = parse_expr(scn["chart"]["exclusion"], n, params) if scn["chart"].get("exclusion") else None
        chart = geom.ChartDomain(tuple(scn["chart"]["lo"]), tuple(scn["chart"]["hi"]), excl, params)
    except ExprSyntaxError as e:
        raise ScenarioError(f"chart/exclusion: {e}") from e
    except ValueError as e:
        raise ScenarioError(f"chart: {e}") from e
    g = geom.ExprMetric(_parse_grid(scn["metric"], n, params, "metric"), n, params, chart)
    if "connection" in scn:
        G = [_parse_grid(layer, n, params, f"connection/christoffel/{k}")
             for k, layer in enumerate(scn["connection"]["christoffel"])]
        conn = geom.ExprConnection(G, n, params)
    else:
        conn = geom.LeviCivita(g)
    fields = {}
    for name, f in scn.get("fields", {}).items():
        if "normal_form" in f:
            fields[name] = projfield.NormalFormField(np.array(f["normal_form"]["A"], dtype=float),
                                                     np.array(f["normal_form"]["w"], dtype=float))
        else:
            try:
                fields[name] = projfield.ExprVectorField(f["components"], n, params)
            except ExprSyntaxError as e:
                raise ScenarioError(f"fields/{name}: {e}") from e
    s = scn.get("seed", 0) if seed is None else int(seed)
    return Context(scn["name"], n, s, float(tol_scale), chart, g, conn, params, fields)


# --------------------------------------------------------------------------
# Checks

class CheckFailure(Exception):
    """A check could not produce a verdict (e.g. a basis fit failed)."""


@dataclass
class CheckSpec:
    fn: Callable
    params: tuple


CHECKS: dict[str, CheckSpec] = {}


def _check(name, *params):
    def deco(fn):
        CHECKS[name] = CheckSpec(fn, ("seed",) + params)
        return fn
    return deco


def _other_metric(ctx: Context, other) -> geom.MetricField:
    if other == "flat":
        return geom.ExprMetric(euclidean(ctx.dim), ctx.dim)
    if isinstance(other, dict) and "metric" in other:
        return geom.ExprMetric(_parse_grid(other["metric"], ctx.dim, ctx.params, "other/metric"),
                               ctx.dim, ctx.params, ctx.chart)
    raise ScenarioError("'other' must be \"flat\" or {\"metric\": [[...]]}")


def _other_conn(ctx, other):
    return geom.FlatConnection(ctx.dim) if other == "flat" else geom.LeviCivita(_other_metric(ctx, other))


def _strength_field(ctx, c) -> bm.TensorField:
    return bm.GStrengthField(ctx.metric, _other_metric(ctx, c.get("strength_of", "flat")))


def _nf(ctx, c) -> projfield.NormalFormField:
    X = ctx.fields[c["field"]]
    if not isinstance(X, projfield.NormalFormField):
        raise ScenarioError(f"check {c['check']!r} needs a normal-form field (A, w)")
    return X


def _basis(ctx, c, flow, t0):
    spec = c.get("basis", "pair")
    if spec == "pair":
        return None, None, None
    if isinstance(spec, dict) and "mobility_degree" in spec:
        rep = bm.mobility_estimate(ctx.metric, ctx.chart, int(spec["mobility_degree"]), seed=ctx.seed)
        B = rep.basis_fields()
        return B, [f"B{i}" for i in range(len(B))], rep
    raise ScenarioError("'basis' must be \"pair\" or {\"mobility_degree\": d}")


def _flow_points(ctx, m, shrink=0.8):
    return ctx.chart.sample(m, seed=ctx.seed, shrink=shrink)


@_check("metric", "samples", "expect")
def _c_metric(ctx, c):
    x = ctx.chart.sample(c.get("samples", 64), seed=ctx.seed)
    r = geom.check_metric(ctx.metric, x)
    ok = r["max_asymmetry"] == 0.0 and r["nondegenerate"] and r["signature_constant"]
    if "positive_index" in c.get("expect", {}):
        ok &= r["positive_index"] == int(c["expect"]["positive_index"])
    return ok, r, {}


@_check("curvature", "samples", "tol", "expect")
def _c_curvature(ctx, c):
    tol = c.get("tol", 1e-8) * ctx.tol_scale
    exp = c.get("expect", {})
    x = ctx.chart.sample(c.get("samples", 50), seed=ctx.seed)
    ct = geom.curvature(ctx.conn, x)
    Rmax = np.abs(ct.riemann).reshape(len(x), -1).max(-1)
    Wmax = np.abs(ct.weyl_proj).reshape(len(x), -1).max(-1)
    anti, wtr = ct.antisymmetry_defect(), ct.weyl_trace_defect()
    res = {"antisymmetry_defect": anti, "weyl_trace_defect": wtr,
           "max_abs_riemann": float(Rmax.max()), "max_abs_weyl": float(Wmax.max())}
    ok = anti <= tol and wtr <= tol
    if "riemann_zero" in exp:
        ok &= (res["max_abs_riemann"] <= tol) == bool(exp["riemann_zero"])
    if "weyl_zero" in exp:
        wtol = 1e-7 * ctx.tol_scale
        ok &= (res["max_abs_weyl"] <= wtol) == bool(exp["weyl_zero"])
    if "ricci_factor" in exp:
        k = float(exp["ricci_factor"])
        dev = float(np.max(np.abs(ct.ricci - k * ctx.metric.value(x))))
        res["ricci_factor_deviation"] = dev
        ok &= dev <= tol
    rows = [list(p) + [r, w] for p, r, w in zip(x, Rmax, Wmax)]
    head = [f"x{i + 1}" for i in range(ctx.dim)] + ["max_abs_riemann", "max_abs_weyl"]
    return ok, res, {"pointwise": (head, rows)}


def random_one_form(n: int, rng: np.random.Generator, degree: int = 2) -> geom.OneForm:
    """One-form with random polynomial components of total degree <= ``degree``."""
    from .bm import _multi_indices
    comps = []
    for _ in range(n):
        terms = []
        for mi in _multi_indices(n, degree):
            coef = rng.uniform(-1, 1)
            mono = "*".join(f"x{k + 1}^{p}" for k, p in enumerate(mi) if p) or "1"
            terms.append(f"({coef!r})*{mono}")
        comps.append(" + ".join(terms))
    return geom.OneForm(comps, n)


@_check("weyl_invariance", "forms", "samples", "tol")
def _c_weyl_inv(ctx, c):
    tol = c.get("tol", 1e-7) * ctx.tol_scale
    rng = np.random.default_rng(ctx.seed)
    x = ctx.chart.sample(c.get("samples", 50), seed=ctx.seed)
    W0 = geom.projective_weyl(ctx.conn, x)
    diffs = []
    for _ in range(c.get("forms", 10)):
        eta = random_one_form(ctx.dim, rng)
        W1 = geom.projective_weyl(geom.ProjectivelyShifted(ctx.conn, eta), x)
        diffs.append(float(np.max(np.abs(W1 - W0))))
    md = max(diffs)
    return md <= tol, {"max_difference": md, "forms": len(diffs)}, {
        "per_form": (["form", "max_abs_difference"], [[i, d] for i, d in enumerate(diffs)])}


@_check("projective_diff", "other", "samples", "tol", "expect")
def _c_projdiff(ctx, c):
    tol = c.get("tol", 1e-8) * ctx.tol_scale
    x = ctx.chart.sample(c.get("samples", 50), seed=ctx.seed)
    pdf = geom.projective_diff(ctx.conn, _other_conn(ctx, c.get("other", "flat")), x, tol=tol)
    eq = bool(pdf.success)
    exp = c.get("expect", True)
    head = [f"x{i + 1}" for i in range(ctx.dim)] + [f"eta{i + 1}" for i in range(ctx.dim)]
    rows = [list(p) + list(e) for p, e in zip(x, pdf.eta)]
    return eq == bool(exp), {"projectively_equivalent": eq, "residual": float(pdf.residual)}, {
        "eta": (head, rows)}


@_check("shares_geodesics", "other", "trials", "tol", "s_max", "expect")
def _c_shares(ctx, c):
    tol = c.get("tol", 1e-5) * ctx.tol_scale
    r = geodesic.shares_geodesics(ctx.conn, _other_conn(ctx, c.get("other", "flat")), ctx.chart,
                                  trials=c.get("trials", 6), seed=ctx.seed, tol=tol, s_max=c.get("s_max", 0.5))
    exp = bool(c.get("expect", True))
    return r.all_pass == exp, {"trials": r.trials, "passed": r.passed, "all_pass": r.all_pass,
                               "max_distance": max(r.max_distance)}, {
        "per_trial": (["trial", "max_distance"], [[i, d] for i, d in enumerate(r.max_distance)])}


@_check("geodesics", "trials", "tol", "s_max")
def _c_geodesics(ctx, c):
    tol = c.get("tol", 1e-6) * ctx.tol_scale
    rng = np.random.default_rng(ctx.seed)
    rows = []
    for x0 in ctx.chart.sample(c.get("trials", 5), seed=ctx.seed, shrink=0.5):
        v0 = rng.normal(size=ctx.dim)
        v0 /= np.linalg.norm(v0)
        cv = geodesic.integrate_geodesic(ctx.conn, x0, v0, (-c.get("s_max", 0.5), c.get("s_max", 0.5)), ctx.chart)
        rows.append([cv.s_range[0], cv.s_range[1], cv.residual(), int(cv.left_chart)])
    mr = max(r[2] for r in rows)
    return mr <= tol, {"max_residual": mr, "trials": len(rows)}, {
        "per_trial": (["s_min", "s_max", "residual", "left_chart"], rows)}


@_check("mobility", "degree", "samples", "tol", "expect")
def _c_mobility(ctx, c):
    r = bm.mobility_estimate(ctx.metric, ctx.chart, c.get("degree", 4), samples=c.get("samples"),
                             tol=c.get("tol", 1e-8), seed=ctx.seed)
    exp = c.get("expect", {})
    ok = r.within_bound and not r.ill_conditioned
    if "dimension" in exp:
        ok &= r.dimension == int(exp["dimension"])
    if "min_gap" in exp:
        ok &= r.gap_ratio >= float(exp["min_gap"])
    res = r.to_dict()
    sv = res.pop("singular_values")
    res["smallest_singular_values"] = sv[-min(len(sv), 12):]
    rows = [[i, s, s / sv[0]] for i, s in enumerate(sv)]
    return ok, res, {"singular_values": (["index", "sigma", "sigma_rel"], rows)}


@_check("is_projective", "field", "samples", "tol", "expect")
def _c_isproj(ctx, c):
    tol = c.get("tol", 1e-7) * ctx.tol_scale
    x = ctx.chart.sample(c.get("samples", 50), seed=ctx.seed)
    r = projfield.is_projective(ctx.fields[c["field"]], ctx.conn, x, tol=tol)
    exp = c.get("expect", {"projective": True})
    ok = True
    for k in ("projective", "affine"):
        if k in exp:
            ok &= getattr(r, k) == bool(exp[k])
    head = [f"x{i + 1}" for i in range(ctx.dim)] + ["trace_free_residual", "lie_derivative_norm"]
    rows = [list(p) + list(q) for p, q in zip(x, r.per_point)]
    return ok, {"projective": r.projective, "affine": r.affine, "trace_free_residual": r.trace_free_residual,
                "affine_residual": r.affine_residual}, {"residuals": (head, rows)}


@_check("linearizable", "field", "expect", "tol")
def _c_linearizable(ctx, c):
    tol = c.get("tol", 1e-8) * ctx.tol_scale
    nf = _nf(ctx, c)
    cert = projfield.linearizable(nf)
    res = {"linearizable": cert.linearizable, "rank": cert.rank, "near_threshold": cert.near_threshold,
           "w_kernel": cert.w_kernel.tolist()}
    red = projfield.reduce_ker(nf, return_map=True)
    res["reduced_w"] = red.field.w.tolist()
    ok = cert.linearizable == bool(c.get("expect", cert.linearizable))
    flow = projfield.ClosedFormFlow(red.field)
    if cert.linearizable:
        # reduced field is linear: D phi^t(0) = e^{tA}
        dev = max(float(np.max(np.abs(flow.jacobian(t, np.zeros(ctx.dim)) - scipy.linalg.expm(t * nf.A))))
                  for t in (-1.0, -0.5, 0.5, 1.0))
        res["linear_jacobian_deviation"] = dev
        ok &= np.allclose(red.field.w, 0.0) and dev <= tol
    else:
        v = cert.w_kernel / np.linalg.norm(cert.w_kernel)
        ys = np.linspace(-0.4, 0.4, 9)
        ts = [-0.5, 0.5, 1.0]
        a, defect = projfield.radial_rate(flow, v, ys[ys != 0], ts)
        res.update({"radial_rate": a, "radial_defect": defect})
        ok &= abs(a) > 1e-6 and defect <= tol
    return ok, res, {}


@_check("flow_exactness", "field", "times", "samples", "tol", "rational_formula")
def _c_flow(ctx, c):
    tol = c.get("tol", 1e-6) * ctx.tol_scale
    nf = _nf(ctx, c)
    cf = projfield.ClosedFormFlow(nf)
    nm = projfield.NumericFlow(nf)
    ts = c.get("times", [-1.0, -0.5, 0.5, 1.0])
    x = _flow_points(ctx, c.get("samples", 50))
    rows, dnum, drat = [], 0.0, 0.0
    use_rat = bool(c.get("rational_formula", False))
    if use_rat and np.max(np.abs(nf.A.T @ nf.w)) > 1e-12:
        raise ScenarioError("rational_formula requires A^T w = 0")
    for t in ts:
        y = cf.apply(t, x)
        e_num = np.linalg.norm(y - nm.apply(t, x), axis=-1)
        dnum = max(dnum, float(e_num.max()))
        row_rat = np.full(len(x), np.nan)
        if use_rat:
            # A^T w = 0 makes <w, x> a flow invariant of the linear part
            yr = (x @ scipy.linalg.expm(t * nf.A).T) / (1.0 - t * (x @ nf.w))[:, None]
            row_rat = np.linalg.norm(y - yr, axis=-1)
            drat = max(drat, float(row_rat.max()))
        rows += [[t, k, en, er] for k, (en, er) in enumerate(zip(e_num, row_rat))]
    res = {"max_numeric_deviation": dnum, "times": list(ts), "points": len(x)}
    ok = dnum <= tol
    if use_rat:
        res["max_formula_deviation"] = drat
        ok &= drat <= 1e-12 * ctx.tol_scale
    return ok, res, {"deviations": (["t", "point", "numeric_deviation", "formula_deviation"], rows)}


@_check("bm_from_field", "field", "samples", "tol", "expect")
def _c_bm_field(ctx, c):
    tol = c.get("tol", 1e-6) * ctx.tol_scale
    X = ctx.fields[c["field"]]
    x = ctx.chart.sample(c.get("samples", 100), seed=ctx.seed)
    K = bm.FieldBM(ctx.metric, X)
    Kv = K.value(x)
    resid = bm.bm_residual_points(ctx.metric, K, x)
    sad = bm.self_adjointness_defect(ctx.metric, K, x)
    res = {"bm_residual": float(resid.max()), "self_adjointness_defect": sad,
           "max_abs_K": float(np.abs(Kv).max())}
    ok = res["bm_residual"] <= tol and sad <= tol
    if c.get("expect", {}).get("zero"):
        ok &= res["max_abs_K"] <= tol
    head = [f"x{i + 1}" for i in range(ctx.dim)] + ["bm_residual"]
    return ok, res, {"residuals": (head, [list(p) + [r] for p, r in zip(x, resid)])}


def _orbit_table(ctx, flow, t0, x0, ts):
    Kbar = transport.kt_field(ctx.metric, flow, t0)
    rows = []
    for t in ts:
        p = flow.apply(t, x0)
        ev = sorted(np.linalg.eigvals(Kbar.value(p)), key=lambda z: (z.real, z.imag))
        rows.append([t] + list(p) + [v for z in ev for v in (z.real, z.imag)])
    head = ["t"] + [f"x{i + 1}" for i in range(ctx.dim)] + [
        f"{part}{k + 1}" for k in range(ctx.dim) for part in ("re_lambda", "im_lambda")]
    return head, rows


def _lt_record(ctx, c, flow, t0, pts):
    B, names, rep = _basis(ctx, c, flow, t0)
    try:
        rec = transport.lt_matrix(ctx.metric, flow, t0, pts, B, names, fit_tol=c.get("fit_tol", 1e-5) * ctx.tol_scale)
    except transport.FitError as e:
        raise CheckFailure(str(e)) from e
    return rec, B, rep


@_check("lt_matrix", "field", "t0", "basis", "samples", "fit_tol", "group_law", "tol", "expect")
def _c_lt(ctx, c):
    tol = c.get("tol", 1e-6) * ctx.tol_scale
    nf = _nf(ctx, c)
    flow = projfield.ClosedFormFlow(nf)
    t0 = float(c.get("t0", 0.5))
    pts = _flow_points(ctx, c.get("samples", 60))
    rec, B, rep = _lt_record(ctx, c, flow, t0, pts)
    res = rec.to_dict()
    if rep is not None:
        res["mobility_dimension"] = rep.dimension
    tg, sg = c.get("group_law", [0.3, 0.2])
    basis = B if B is not None else rec.basis_fields
    gl = transport.group_law_residual(ctx.metric, flow, tg, sg, basis, pts)
    res["group_law_residual"] = gl
    ok = gl <= tol
    exp = c.get("expect", {})
    if "classification" in exp:
        ok &= rec.classification == exp["classification"]
    for k in ("alpha", "beta"):
        if k in exp:
            ok &= getattr(rec, k) is not None and abs(getattr(rec, k) - float(exp[k])) <= tol
    if "fixes_identity_line" in exp:
        ok &= rec.fixes_identity_line == bool(exp["fixes_identity_line"])
    x0 = np.full(ctx.dim, 0.5) * np.asarray(ctx.chart.half_width) * 0.5 + np.asarray(ctx.chart.center)
    tab = _orbit_table(ctx, flow, t0, x0, np.linspace(0.0, 1.0, 11))
    mrows = [[i] + list(r) for i, r in enumerate(np.asarray(rec.matrix))]
    return ok, res, {"orbit_spectrum": tab,
                     "matrix": (["row"] + [f"c{j}" for j in range(len(mrows))], mrows)}


@_check("spectral_transport", "field", "t0", "basis", "samples", "fit_tol", "tol", "negative_control_t")
def _c_spectral(ctx, c):
    tol = c.get("tol", 1e-5) * ctx.tol_scale
    nf = _nf(ctx, c)
    flow = projfield.ClosedFormFlow(nf)
    t0 = float(c.get("t0", 0.5))
    fit_pts = _flow_points(ctx, 60)
    rec, _, _ = _lt_record(ctx, c, flow, t0, fit_pts)
    if rec.alpha is None:
        raise CheckFailure("no Moebius map for this L_t0")
    pts = ctx.chart.sample(c.get("samples", 100), seed=ctx.seed + 1, shrink=0.8)
    r = transport.spectral_transport_check(ctx.metric, flow, t0, rec.alpha, rec.beta, pts, tol=tol)
    res = {"alpha": rec.alpha, "beta": rec.beta, "mobius_source": rec.mobius_source,
           "pass": r.passed, "max_dist": r.max_dist, "origin_invariance": r.origin_invariance,
           "skipped": r.skipped, "pair_fit": rec.pair_fit}
    ok = r.passed
    tables = {"distances": (["point", "distance"], [[i, d] for i, d in enumerate(r.distances)])}
    if "negative_control_t" in c:
        neg = transport.spectral_transport_check(ctx.metric, flow, t0, rec.alpha, rec.beta, pts, tol=tol,
                                                 compare_t=float(c["negative_control_t"]))
        res["negative_control"] = {"t": float(c["negative_control_t"]), "pass": neg.passed,
                                   "max_dist": neg.max_dist}
        ok &= not neg.passed
    return ok, res, tables


@_check("psi_tau", "field", "t0", "direction", "s_range", "h", "tol", "expect")
def _c_psitau(ctx, c):
    tol = c.get("tol", 1e-4) * ctx.tol_scale
    nf = _nf(ctx, c)
    flow = projfield.ClosedFormFlow(nf)
    t0 = float(c.get("t0", 0.5))
    v = np.asarray(c.get("direction", [1.0] + [0.0] * (ctx.dim - 1)), dtype=float)
    if len(v) != ctx.dim:
        raise ScenarioError("direction has the wrong length")
    curve = geodesic.integrate_geodesic(ctx.conn, ctx.chart.center, v, tuple(c.get("s_range", [-0.4, 0.4])),
                                        ctx.chart)
    try:
        r = transport.psi_tau_check(ctx.metric, flow, t0, curve, h=c.get("h", 1e-3), tol=tol)
    except geodesic.NotInvariantError as e:
        raise CheckFailure(f"geodesic is not flow-invariant: {e}") from e
    res = {"pass": r.passed, "sup_err": r.sup_err, "dlog_dtau_at_0": r.dlog_dtau_at_0, "samples": len(r.s)}
    ok = r.passed and len(r.s) >= 5
    exp = c.get("expect", {})
    if "dlog_dtau_at_0" in exp:
        d = None if r.dlog_dtau_at_0 is None else abs(r.dlog_dtau_at_0 - float(exp["dlog_dtau_at_0"]))
        res["dlog_dtau_deviation"] = d
        ok &= d is not None and d <= tol
    rows = [list(t) for t in zip(r.s, r.tau, r.dtau, r.psi, r.dpsi, r.half_dlog_dtau)]
    return ok, res, {"samples": (["s", "tau", "dtau_ds", "psi", "dpsi_ds", "half_dlog_dtau_ds"], rows)}


@_check("eta_origin", "field", "times", "min_norm")
def _c_eta(ctx, c):
    nf = _nf(ctx, c)
    flow = projfield.ClosedFormFlow(nf)
    rows = []
    for t in c.get("times", [0.1, 0.5, 1.0]):
        eta = transport.eta_t(ctx.metric, flow, float(t), ctx.chart.center)
        rows.append([float(t)] + list(eta) + [float(np.linalg.norm(eta))])
    mn = min(r[-1] for r in rows)
    head = ["t"] + [f"eta{i + 1}" for i in range(ctx.dim)] + ["norm"]
    return mn > c.get("min_norm", 1e-6), {"min_norm": mn, "eta": [r[1:-1] for r in rows]}, {"eta": (head, rows)}


@_check("ordering", "strength_of", "samples", "expect")
def _c_ordering(ctx, c):
    K = _strength_field(ctx, c)
    try:
        r = bm.ordering_check(ctx.metric, K, ctx.chart, m=c.get("samples", 200), seed=ctx.seed)
    except bm.NonRiemannianError as e:
        raise CheckFailure(str(e)) from e
    exp = c.get("expect", {}).get("ordered", True)
    return r.ordered == bool(exp), {"ordered": r.ordered, "violations": [list(v) for v in r.violations],
                                    "lambda_max": r.lam_max, "lambda_min": r.lam_min}, {}


@_check("splitting", "strength_of", "point", "tol")
def _c_splitting(ctx, c):
    tol = c.get("tol", 1e-8) * ctx.tol_scale
    K = _strength_field(ctx, c)
    x = np.asarray(c.get("point", ctx.chart.center), dtype=float)
    try:
        r = bm.splitting_orthogonality(ctx.metric, K, x, tol=tol)
    except bm.NoSpectralGapError as e:
        raise CheckFailure(str(e)) from e
    return r.orthogonal, {"orthogonal": r.orthogonal, "max_cross": r.max_cross,
                          "clusters": [list(k) for k in r.clusters], "gap": r.gap}, {}


# --------------------------------------------------------------------------
# Running and output

def _clean(v):
    """Recursively convert to JSON-safe Python values (non-finite -> None)."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (complex, np.complexfloating)):
        z = complex(v)
        return _clean(z.real) if z.imag == 0 else [_clean(z.real), _clean(z.imag)]
    return v


@dataclass
class RunResult:
    report: dict
    tables: dict  # file name -> (header, rows)
    exit_code: int


def run_scenario(scn: dict, seed: int | None = None, tol_scale: float = 1.0,
                 log: Callable[[str], None] | None = None) -> RunResult:
    """Execute all checks in order.  Raises :class:`ScenarioError` for malformed input."""
    ctx = build(scn, seed, tol_scale)
    checks, tables = [], {}
    exit_code = 0
    report = {"schema": REPORT_TAG, "scenario": ctx.name, "seed": ctx.seed, "tol_scale": ctx.tol_scale}
    for i, c in enumerate(scn["checks"]):
        cid = f"{i:02d}-{c['check']}"
        params = {k: v for k, v in c.items() if k != "check"}
        sub = ctx
        if "seed" in c:
            sub = Context(**{**ctx.__dict__, "seed": int(c["seed"])})
        entry = {"id": cid, "check": c["check"], "params": _clean(params), "tables": []}
        try:
            ok, res, tabs = CHECKS[c["check"]].fn(sub, c)
        except CheckFailure as e:
            ok, res, tabs = False, {}, {}
            entry["error"] = str(e)
        except DomainError as e:
            pt = None if e.point is None else _clean(np.asarray(e.point, dtype=float).reshape(-1))
            report["domain_error"] = {"check": cid, "message": str(e), "point": pt}
            entry.update({"pass": False, "result": {}, "error": f"domain error: {e}"})
            checks.append(entry)
            exit_code = 3
            if log:
                log(f"{cid}: DOMAIN ERROR {e} at {pt}")
            break
        except ExprError as e:
            raise ScenarioError(f"{cid}: {e}") from e
        entry["pass"] = bool(ok)
        entry["result"] = _clean(res)
        for tname, tab in sorted(tabs.items()):
            fname = f"{cid}-{tname}.csv"
            tables[fname] = tab
            entry["tables"].append(fname)
        checks.append(entry)
        if not ok and exit_code == 0:
            exit_code = 1
        if log:
            log(f"{cid}: {'pass' if ok else 'FAIL'}" + (f" ({entry['error']})" if "error" in entry else ""))
    report["checks"] = checks
    report["pass"] = exit_code == 0
    report["exit_code"] = exit_code
    return RunResult(report, tables, exit_code)


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return f"{v:.16e}"


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_outputs(result: RunResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    validate_report(json.loads(dumps_report(result.report)))
    (out / "report.json").write_text(dumps_report(result.report))
    for fname, (head, rows) in result.tables.items():
        (out / fname).write_text(format_csv(head, rows))
    return out


def load_scenario(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
