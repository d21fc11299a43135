"""Command-line interface.

    glap young check --spec young.json
    glap source check --problem bundle.json
    glap solve --problem bundle.json --h 1/512
    glap inner-solve | fixed-point | rescale --problem bundle.json
    glap probe-lambda --problem bundle.json --lmax 50 --steps 25
    glap probe-liouville --problem bundle.json
    glap gk-limit --spec young.json --q 4

Exit codes: 0 success, 2 invalid input or failed condition check,
3 solver non-convergence.  Probes always exit 0.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .blowup import (ContinuationConfig, gk_limit_check, lambda_continuation,
                     liouville_scaling_probe, rescale)
from .errors import DomainError, GlapError, MeshError, SolverError
from .fixed_point import FixedPointConfig, probe_small_sphere, solve_multistart
from .mesh import Field, build_mesh
from .source import ScalarLaw, check_all, from_dict as source_from_dict
from .solver import DiscreteProblem, find_positive_solution, inner_solve
from .young import YoungFunction, exponent_report

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


class InputError(Exception):
    """Malformed or schema-invalid input; mapped to exit code 2."""


def load_schema(name):
    return json.loads(resources.files("glap").joinpath("schemas", f"{name}.schema.json").read_text())


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(bundle, sets):
    """Apply ``dotted.path=value`` overrides in place."""
    for item in sets or ():
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        parts = key.split(".")
        node = bundle
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(val)
    return bundle


def parse_h(text):
    try:
        h = float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"--h: cannot parse {text!r}") from exc
    if h <= 0:
        raise InputError("--h must be positive")
    return h


def load_bundle(path, sets=(), h=None, schema="problem"):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        bundle = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(bundle, dict):
        raise InputError(f"{path}: top level must be an object")
    apply_overrides(bundle, sets)
    if h is not None:
        bundle.setdefault("mesh", {})["h"] = h
    if schema == "problem":
        validate(bundle, load_schema("problem"), path)
    return bundle


def validate(obj, schema, label="document"):
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(obj),
                    key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{label}: {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
                 for e in errors[:10]]
        raise InputError("\n".join(lines))


def _need(bundle, *keys):
    missing = [k for k in keys if k not in bundle]
    if missing:
        raise InputError(f"problem bundle lacks required field(s): {', '.join(missing)}")


def build_problem(bundle):
    _need(bundle, "mesh", "young")
    mesh = build_mesh(bundle["mesh"])
    yf = YoungFunction.from_dict(bundle["young"])
    src = bundle.get("source")
    st = source_from_dict(src) if src is not None else None
    eps = bundle.get("solver", {}).get("epsilon", 1e-6)
    return DiscreteProblem(mesh, yf, st, lam=float(bundle.get("lambda", 0.0)),
                           L=float(bundle.get("L", 0.0)), epsilon=float(eps))


def _young_from(bundle):
    d = bundle.get("young", {k: v for k, v in bundle.items() if k not in ("description", "gk")})
    validate(d, {**load_schema("problem")["$defs"]["young"],
                 "$defs": load_schema("problem")["$defs"]}, "young")
    return YoungFunction.from_dict(d)


# ---------------------------------------------------------------------------
# commands; each returns (exit_code, result dict, artifact names)

def _field_artifacts(out, u, name="field"):
    io.write_field_csv(out / f"{name}.csv", u, out / f"{name}_elements.csv")
    arts = [f"{name}.csv", f"{name}_elements.csv"]
    if u.mesh.dimension == 1:
        order = np.argsort(u.mesh.vertices[:, 0])
        io.write_svg(out / f"{name}_profile.svg",
                     {"u": (u.mesh.vertices[order, 0], u.values[order])},
                     title="profile", xlabel="x", ylabel="u")
        arts.append(f"{name}_profile.svg")
    return arts


def cmd_young_check(args, bundle, out):
    yf = _young_from(bundle)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = exponent_report(yf)
    return EXIT_OK, rep.to_dict(), []


def cmd_source_check(args, bundle, out):
    dp = build_problem(bundle)
    if dp.source is None:
        raise InputError("source check needs a source term")
    reps = check_all(dp.source, dp.yf, n=dp.mesh.dimension)
    ok = all(r.passed for r in reps)
    res = {"kind": "condition_reports", "all_passed": ok, "reports": [r.to_dict() for r in reps]}
    return (EXIT_OK if ok else EXIT_INVALID), res, []


def _solve_result(u, rep, method, dp):
    d = rep.to_dict()
    d.update(method=method, n_vertices=dp.mesh.n_vertices, h=float(dp.mesh.h))
    return d


def _history_svg(out, rep, name="convergence.svg"):
    io.write_svg(out / name, {"residual": (np.arange(len(rep.residual_history)),
                                           rep.residual_history)},
                 title="Newton residual", xlabel="iteration", ylabel="residual", logy=True)
    return [name]


def cmd_solve(args, bundle, out):
    dp = build_problem(bundle)
    tol = float(bundle.get("solver", {}).get("tol", 1e-8))
    if dp.source is None:
        # no source: -Delta_g u = lambda is the minimiser of a convex energy
        u, rep = inner_solve(dp.replace(L=0.0), np.full(dp.mesh.n_vertices, dp.lam), tol=tol)
        method = "inner"
    else:
        rng = np.random.default_rng(args.seed)
        u, rep = find_positive_solution(dp, tol=tol, rng=rng if args.seed else None)
        method = "direct"
    arts = _field_artifacts(out, u) + _history_svg(out, rep)
    return (EXIT_OK if rep.converged else EXIT_SOLVER), _solve_result(u, rep, method, dp), arts


def cmd_inner_solve(args, bundle, out):
    dp = build_problem(bundle)
    tol = float(bundle.get("solver", {}).get("tol", 1e-8))
    psi = float(bundle.get("psi", dp.lam))
    u, rep = inner_solve(dp, np.full(dp.mesh.n_vertices, psi), tol=tol)
    arts = _field_artifacts(out, u) + _history_svg(out, rep)
    return (EXIT_OK if rep.converged else EXIT_SOLVER), _solve_result(u, rep, "inner", dp), arts


def cmd_fixed_point(args, bundle, out):
    dp = build_problem(bundle)
    fp = dict(bundle.get("fixed_point", {}))
    amps = tuple(fp.pop("amplitudes", (0.1, 1.0, 3.0, 10.0)))
    cfg = FixedPointConfig.from_dict(fp)
    u, tr = solve_multistart(dp, cfg, amplitudes=amps)
    io.write_records_csv(out / "trace.csv", tr.records,
                         ["iter", "sup_norm", "c1_norm", "update", "inner_iters"])
    io.write_records_csv(out / "starts.csv", tr.starts, ["amplitude", "outcome", "iterations"])
    res = tr.summary()
    res["config"] = cfg.to_dict()
    res["small_sphere_probe"] = probe_small_sphere(dp, cfg)
    io.write_svg(out / "trace.svg", {"sup norm": ([r["iter"] for r in tr.records],
                                                  [r["sup_norm"] for r in tr.records])},
                 title="fixed-point iteration", xlabel="iteration", ylabel="sup u", logy=True)
    arts = ["trace.csv", "starts.csv", "trace.svg"] + _field_artifacts(out, u)
    return (EXIT_OK if tr.outcome == "converged" else EXIT_SOLVER), res, arts


def _load_field(path, mesh):
    verts, _, vals = io.read_field_csv(path)
    if len(vals) != mesh.n_vertices or not np.allclose(verts[:, :mesh.dimension], mesh.vertices):
        raise InputError(f"{path}: field does not match the problem mesh")
    return Field(mesh, vals)


def cmd_rescale(args, bundle, out):
    dp = build_problem(bundle)
    if args.field:
        u = _load_field(args.field, dp.mesh)
    else:
        u, rep = find_positive_solution(dp, tol=float(bundle.get("solver", {}).get("tol", 1e-8)))
        if not rep.converged:
            return EXIT_SOLVER, _solve_result(u, rep, "direct", dp), []
    lam_k = args.lambda_k if args.lambda_k is not None else dp.lam
    r = rescale(u, dp, args.case, lam_k, half_width=args.half_width)
    arts = _field_artifacts(out, r.v, "rescaled")
    return EXIT_OK, r.to_dict(), arts


def cmd_probe_lambda(args, bundle, out):
    dp = build_problem(bundle)
    if dp.source is None:
        raise InputError("probe-lambda needs a source term")
    grid = np.linspace(0.0, args.lmax, args.steps + 1)
    cfg = ContinuationConfig.from_dict(bundle.get("continuation"))
    tab = lambda_continuation(dp, grid, cfg)
    io.write_records_csv(out / "branch.csv", tab.rows,
                         ["lambda", "sup_norm", "converged", "iterations"])
    ok = [r for r in tab.rows if r["converged"]]
    io.write_svg(out / "branch.svg", {"sup u": ([r["lambda"] for r in ok],
                                                [r["sup_norm"] for r in ok])},
                 title="continuation branch", xlabel="lambda", ylabel="sup u")
    return EXIT_OK, tab.to_dict(), ["branch.csv", "branch.svg"]


def cmd_probe_liouville(args, bundle, out):
    cfg = dict(bundle.get("liouville", {}))
    p = args.p if args.p is not None else cfg.get("p", 2.0)
    q = args.q if args.q is not None else cfg.get("q", 4.0)
    radii = args.radii or cfg.get("radii", [1.0, 2.0, 4.0, 8.0])
    h = args.probe_h if args.probe_h is not None else cfg.get("h", 0.125)
    res = liouville_scaling_probe(p, q, radii, h=h)
    io.write_csv(out / "liouville.csv", ["radius", "sup_norm", "converged"],
                 zip(res.radii, res.sup_norms, res.converged))
    io.write_svg(out / "liouville.svg", {"sup u_R": (res.radii, res.sup_norms)},
                 title="scaling probe", xlabel="R", ylabel="sup u", logx=True, logy=True)
    d = res.to_dict()
    d["h"] = float(h)
    return EXIT_OK, d, ["liouville.csv", "liouville.svg"]


def cmd_gk_limit(args, bundle, out):
    yf = _young_from(bundle)
    cfg = dict(bundle.get("gk", {}))
    q = args.q if args.q is not None else cfg.get("q", 4.0)
    N = args.N or cfg.get("N", [1e1, 1e2, 1e3, 1e4, 1e5])
    p = args.p if args.p is not None else cfg.get("p")
    T = cfg.get("T", 2.0)
    f = ScalarLaw("power", exponent=q - 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tab = gk_limit_check(yf, f, sorted(N), t_grid=np.linspace(0.0, T, 201), p=p)
    io.write_csv(out / "deviation.csv", ["N", "deviation"], zip(tab.N, tab.deviation))
    io.write_svg(out / "deviation.svg", {"deviation": (tab.N, tab.deviation)},
                 title="g_N limit", xlabel="N", ylabel="sup deviation", logx=True, logy=True)
    return EXIT_OK, tab.to_dict(), ["deviation.csv", "deviation.svg"]


COMMANDS = {
    "young check": (cmd_young_check, "young"),
    "source check": (cmd_source_check, "problem"),
    "solve": (cmd_solve, "problem"),
    "inner-solve": (cmd_inner_solve, "problem"),
    "fixed-point": (cmd_fixed_point, "problem"),
    "rescale": (cmd_rescale, "problem"),
    "probe-lambda": (cmd_probe_lambda, "problem"),
    "probe-liouville": (cmd_probe_liouville, "problem"),
    "gk-limit": (cmd_gk_limit, "young"),
}
PROBES = {"probe-lambda", "probe-liouville", "gk-limit"}
STATUS = {EXIT_OK: "ok", EXIT_INVALID: "validation_failed", EXIT_SOLVER: "not_converged"}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", "--spec", dest="problem", help="JSON problem bundle")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override a dotted path in the bundle, e.g. solver.epsilon=1e-7")
    common.add_argument("--h", dest="h", help="mesh spacing override, e.g. 1/512")
    common.add_argument("--seed", type=int, default=0, help="seed for multi-start jitter")

    ap = argparse.ArgumentParser(prog="glap", description="g-Laplace solvers and probes")
    sub = ap.add_subparsers(dest="command", required=True)
    for grp in ("young", "source"):
        g = sub.add_parser(grp).add_subparsers(dest="action", required=True)
        g.add_parser("check", parents=[common])
    for name in ("solve", "inner-solve", "fixed-point"):
        sub.add_parser(name, parents=[common])
    r = sub.add_parser("rescale", parents=[common])
    r.add_argument("--case", choices=["case1", "case2"], default="case1")
    r.add_argument("--lambda-k", type=float, default=None)
    r.add_argument("--half-width", type=float, default=10.0)
    r.add_argument("--field", help="field CSV to rescale instead of solving")
    pl = sub.add_parser("probe-lambda", parents=[common])
    pl.add_argument("--lmax", type=float, default=50.0)
    pl.add_argument("--steps", type=int, default=25)
    lv = sub.add_parser("probe-liouville", parents=[common])
    lv.add_argument("--p", type=float)
    lv.add_argument("--q", type=float)
    lv.add_argument("--radii", type=float, nargs="+")
    lv.add_argument("--probe-h", type=float, help="absolute disk mesh spacing")
    gk = sub.add_parser("gk-limit", parents=[common])
    gk.add_argument("--q", type=float, help="f(t) = t^(q-1)")
    gk.add_argument("--p", type=float, help="limit exponent (default: from regular variation)")
    gk.add_argument("--N", type=float, nargs="+")
    return ap


def run(argv=None):
    args = build_parser().parse_args(argv)
    name = args.command if args.command not in ("young", "source") else f"{args.command} {args.action}"
    fn, schema = COMMANDS[name]
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.problem:
            bundle = load_bundle(args.problem, args.set,
                                 parse_h(args.h) if args.h else None, schema)
        elif name == "probe-liouville":
            bundle = apply_overrides({}, args.set)
        else:
            raise InputError(f"{name} needs --problem")
        code, result, arts = fn(args, bundle, out)
    except InputError as exc:
        print(f"glap: invalid input\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, MeshError, ValueError, KeyError, TypeError) as exc:
        print(f"glap: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"glap: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GlapError as exc:
        print(f"glap: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if name in PROBES:
        code = EXIT_OK
    report = {"command": name, "status": STATUS[code], "exit_code": code, "seed": args.seed,
              "problem": bundle or None, "artifacts": sorted(arts + ["report.json"]),
              "result": result}
    io.write_json(out / "report.json", report)
    print(f"glap {name}: {STATUS[code]} -> {out / 'report.json'}")
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
