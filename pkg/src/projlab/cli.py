"""Command-line front end.

    projlab run <file|catalog-name> [--tol-scale F] [--seed N] [--out DIR]
    projlab catalog [--write DIR]
    projlab expr-check <string> --dim N [--param NAME=VALUE ...] [--at X1,X2,...]

Exit codes: 0 all checks pass, 1 some check failed, 2 malformed input
(schema or parse error, reported with its position), 3 numeric domain
error (reported with the offending point).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import catalog as _catalog
from .exprcore import DomainError, ExprError, ExprSyntaxError, eval_jet2, free_params, parse_expr, to_source
from .scenario import ScenarioError, load_scenario, run_scenario, write_outputs

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DOMAIN = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_run(args) -> int:
    path = Path(args.scenario)
    try:
        if path.exists():
            scn = load_scenario(path)
        elif args.scenario in _catalog.names():
            scn = _catalog.get(args.scenario)
        else:
            _err(f"error: no such scenario file or built-in: {args.scenario}")
            return EXIT_INPUT
        result = run_scenario(scn, seed=args.seed, tol_scale=args.tol_scale,
                              log=None if args.quiet else (lambda m: print(m, file=sys.stderr)))
    except ScenarioError as e:
        _err(f"error: {e}")
        return EXIT_INPUT
    out = Path(args.out) if args.out else Path("projlab-out") / result.report["scenario"]
    write_outputs(result, out)
    rep = result.report
    if "domain_error" in rep:
        d = rep["domain_error"]
        _err(f"domain error in {d['check']}: {d['message']} at point {d['point']}")
    npass = sum(c["pass"] for c in rep["checks"])
    print(f"{rep['scenario']}: {npass}/{len(rep['checks'])} checks passed -> {out / 'report.json'}")
    return result.exit_code


def cmd_catalog(args) -> int:
    for s in _catalog.catalog():
        print(f"{s['name']:<30} dim={s['dim']}  checks={len(s['checks']):<2} {s.get('description', '')}")
        if args.write:
            d = Path(args.write)
            d.mkdir(parents=True, exist_ok=True)
            (d / f"{s['name']}.json").write_text(json.dumps(s, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_param(s: str):
    name, sep, val = s.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {s!r}")
    return name.strip(), float(val)


def cmd_expr_check(args) -> int:
    params = dict(args.param or [])
    try:
        e = parse_expr(args.expr, args.dim, params)
    except ExprSyntaxError as err:
        _err(f"error: {err}")
        lines = args.expr.splitlines() or [""]
        _err("  " + lines[min(err.line, len(lines)) - 1])
        _err("  " + " " * (err.col - 1) + "^")
        return EXIT_INPUT
    print(f"canonical: {to_source(e)}")
    print(f"parameters: {sorted(free_params(e))}")
    if args.at is not None:
        x = np.array([float(v) for v in args.at.split(",")])
        if len(x) != args.dim:
            _err(f"error: --at needs {args.dim} coordinates")
            return EXIT_INPUT
        try:
            J = eval_jet2(e, x, params)
        except DomainError as err:
            _err(f"domain error: {err}")
            return EXIT_DOMAIN
        except ExprError as err:
            _err(f"error: {err}")
            return EXIT_INPUT
        print(f"value: {float(J.val)!r}")
        print(f"gradient: {[float(v) for v in J.grad]}")
        print(f"hessian: {[[float(v) for v in r] for r in J.hess]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projlab", description="Projective differential geometry checks on charts.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file (or a built-in scenario by name)")
    r.add_argument("scenario")
    r.add_argument("--tol-scale", type=float, default=1.0, help="multiply every pass/fail tolerance by F")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--out", default=None, help="output directory (default projlab-out/<name>)")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("catalog", help="list built-in scenarios")
    c.add_argument("--write", metavar="DIR", help="also write each scenario as DIR/<name>.json")
    c.set_defaults(func=cmd_catalog)

    e = sub.add_parser("expr-check", help="parse an expression and print its canonical form")
    e.add_argument("expr")
    e.add_argument("--dim", type=int, required=True)
    e.add_argument("--param", type=_parse_param, action="append", metavar="NAME=VALUE")
    e.add_argument("--at", metavar="X1,X2,...", help="evaluate value, gradient and Hessian at a point")
    e.set_defaults(func=cmd_expr_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
