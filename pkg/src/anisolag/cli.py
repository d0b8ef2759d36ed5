"""Command-line front end.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input, 3 a
hypothesis on the input Lagrangian failed.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import checks, fields, functional, gamma, grid, linalg
from .errors import (AnisolagError, ConsistencyError, HypothesisError, InputError, LookupFailure,
                     NonConvergenceError, OptimizationError)
from .lagrangian import (ANISOTROPIC, ANISOTROPIC_CATALOG, EUCLIDEAN, EUCLIDEAN_CATALOG, catalog_lagrangian,
                         lagrangian_from_json, parse_lagrangian, transform, transform_spec)
from .output import RunManifest, load_json_arg, tool_version, write_atomic, write_json

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_HYPOTHESIS = 0, 1, 2, 3
DEFAULT_OUT = "out"
PINV_SAMPLES = 200
LIMIT_AGREEMENT_TOL = 1e-6
BUNDLED = ("example22", "constant_sequence", "adversarial")


# Argument helpers -------------------------------------------------------------

def _looks_like_json(text):
    t = text.strip()
    return t.startswith("{") or t.startswith("[") or t.endswith(".json")


def parse_field_arg(text):
    """Catalog name (``"euclidean:3"`` shorthand allowed) or field JSON."""
    if _looks_like_json(text):
        return fields.field_from_json(load_json_arg(text))
    return fields.get_field(text)


_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$")


def _catalog_call(text):
    """``"name"`` or ``"name(k=v, ...)"`` for catalog names, else None."""
    m = _CALL.match(text)
    name, args = (m.group(1), m.group(2)) if m else (text.strip(), "")
    if name not in EUCLIDEAN_CATALOG and name not in ANISOTROPIC_CATALOG:
        return None
    params = {}
    for part in filter(None, (p.strip() for p in args.split(","))):
        key, sep, val = part.partition("=")
        if not sep:
            raise InputError(f"catalog parameter {part!r} must look like key=value")
        params[key.strip()] = float(val)
    return name, params


def parse_lagrangian_arg(text, field_, kind):
    """Catalog call, DSL source or Lagrangian JSON, bound to ``field_``."""
    if _looks_like_json(text):
        obj = load_json_arg(text)
        if isinstance(obj, dict) and "source" in obj and "kind" not in obj:
            obj = dict(obj, kind=kind)
        return lagrangian_from_json(obj, field_)
    call = _catalog_call(text)
    if call is not None:
        return catalog_lagrangian(call[0], field_, **call[1])
    dim = field_.n if kind == EUCLIDEAN else field_.m
    return parse_lagrangian(text, kind, dim=dim)


def parse_spec_arg(text, p=2.0):
    """Functional spec: ``LAGRANGIAN@FIELD`` or JSON ``{field, lagrangian, p}``."""
    if "@" in text and not _looks_like_json(text):
        lag_text, field_text = text.rsplit("@", 1)
        fld = parse_field_arg(field_text)
        return functional.FunctionalSpec(parse_lagrangian_arg(lag_text, fld, ANISOTROPIC), fld, p)
    obj = load_json_arg(text)
    if not isinstance(obj, dict) or "field" not in obj or "lagrangian" not in obj:
        raise InputError("functional spec needs 'field' and 'lagrangian' (or LAGRANGIAN@FIELD)")
    fld = fields.field_from_json(obj["field"])
    lag = obj["lagrangian"]
    if isinstance(lag, str):
        lag = parse_lagrangian_arg(lag, fld, ANISOTROPIC)
    else:
        lag = lagrangian_from_json(lag, fld)
    return functional.FunctionalSpec(lag, fld, float(obj.get("p", p)))


def parse_box(text, n):
    """``"lo1,lo2:hi1,hi2"`` into a :class:`grid.Box`."""
    try:
        lo, hi = text.split(":")
        lo = [float(v) for v in lo.split(",")]
        hi = [float(v) for v in hi.split(",")]
    except ValueError:
        raise InputError(f"box {text!r} must look like lo1,lo2:hi1,hi2") from None
    if len(lo) != n or len(hi) != n:
        raise InputError(f"box {text!r} needs {n} coordinates per corner")
    return grid.Box(lo, hi)


def _grid_for(spec, args):
    lo, hi = spec.field.lo, spec.field.hi
    if args.domain:
        b = parse_box(args.domain, spec.field.n)
        lo, hi = b.lo, b.hi
    return grid.GridDomain(lo, hi, args.grid)


def _manifest(args, config_path=None):
    return RunManifest(args.command, config_path, args.seed, args.out, tool_version()).to_json()


def _pick_tol(args, default):
    return default if args.tol is None else args.tol


def _out(args, name):
    return Path(args.out) / name


def _print_witness(report):
    print(f"witness: {json.dumps(_json_ready(report.witness), sort_keys=True)}")


def _json_ready(obj):
    from .output import plain

    return plain(obj)


# Commands ----------------------------------------------------------------------

def cmd_verify_pinv(args):
    tol = _pick_tol(args, 1e-10)
    target = load_json_arg(args.spec) if _looks_like_json(args.spec) else args.spec
    if isinstance(target, dict) and "rows" in target:
        mats = linalg.matrix_from_json(target)[None]
        points = None
        label = "matrix"
    else:
        fld = fields.field_from_json(target)
        samples = args.samples or PINV_SAMPLES
        lattice = np.stack(np.meshgrid(*[np.linspace(a, b, 3) for a, b in zip(fld.lo, fld.hi)],
                                       indexing="ij"), axis=-1).reshape(-1, fld.n)
        points = np.vstack([lattice, fld.sample_points(samples, np.random.default_rng(args.seed))])
        mats = fld.matrices(points)
        label = fld.name
    ranks, failures = [], []
    worst = {"penrose": 0.0, "limit_agreement": 0.0}
    for k, c in enumerate(mats):
        where = {"index": k} if points is None else {"x": points[k].tolist()}
        p = linalg.pinv_svd(c)
        pen = linalg.verify_penrose(c, p, tol)
        worst["penrose"] = max(worst["penrose"], max(pen.residuals))
        if not pen.ok:
            failures.append(dict(where, check="penrose", detail=pen.to_dict()))
        try:
            pa = linalg.point_algebra(c, seed=args.seed)
            ranks.append(pa.rank)
        except ConsistencyError as exc:
            ranks.append(linalg.numerical_rank(np.linalg.svd(c, compute_uv=False), c.shape))
            failures.append(dict(where, check="point_algebra", detail=str(exc)))
        try:
            q = linalg.pinv_limit(c)
            scale = max(1.0, float(np.linalg.norm(p)))
            err = float(np.linalg.norm(q - p)) / scale
            worst["limit_agreement"] = max(worst["limit_agreement"], err)
            if err > LIMIT_AGREEMENT_TOL:
                failures.append(dict(where, check="limit_agreement", detail=err))
        except NonConvergenceError as exc:
            failures.append(dict(where, check="limit_agreement", detail=str(exc)))
    profile = {str(r): ranks.count(r) for r in sorted(set(ranks))}
    report = {
        "manifest": _manifest(args),
        "target": label,
        "tol": tol,
        "limit_agreement_tol": LIMIT_AGREEMENT_TOL,
        "seed": args.seed,
        "points": len(mats),
        "pass": not failures,
        "rank_profile": profile,
        "worst": worst,
        "failures": failures[:20],
    }
    if points is not None:
        report["rank_by_point"] = [{"x": x.tolist(), "rank": r} for x, r in zip(points[: len(lattice)], ranks)]
    write_json(_out(args, "verify_pinv.json"), report)
    status = "PASS" if not failures else "FAIL"
    print(f"{status} verify-pinv {label}: {len(mats)} points, rank profile {profile}, "
          f"worst Penrose residual {worst['penrose']:.3e}")
    return EXIT_OK if not failures else EXIT_FAIL


def cmd_transform(args):
    fld = parse_field_arg(args.field)
    f_e = parse_lagrangian_arg(args.f_e, fld, EUCLIDEAN)
    if f_e.kind != EUCLIDEAN:
        raise InputError("transform needs a Euclidean Lagrangian")
    samples = args.samples or checks.DEFAULT_SAMPLES
    seed = args.seed
    ker = checks.check_kernel_invariance(f_e, fld, samples, _pick_tol(args, 1e-12), seed)
    report = {"manifest": _manifest(args), "seed": seed, "samples": samples, "field": fld.name,
              "f_e": f_e.name, "checks": {"kernel_invariance": ker.to_dict()}}
    if not ker.passed:
        report["pass"] = False
        write_json(_out(args, "transform_report.json"), report)
        print(f"FAIL kernel invariance for {f_e.name} over {fld.name} (residual {ker.worst:.3e})")
        _print_witness(ker)
        return EXIT_HYPOTHESIS
    f = transform(f_e, fld)
    tol = _pick_tol(args, 1e-9)
    results = {
        "costonker": checks.check_costonker(f, fld, samples, tol, seed),
        "representation": checks.check_representation(f_e, f, fld, samples, tol, seed),
        "continuity": checks.check_continuity(f, fld, seed=seed),
    }
    cert = f_e.certificate
    if args.certificate:
        from .lagrangian import GrowthCertificate

        cert = GrowthCertificate.from_json(load_json_arg(args.certificate))
    if cert is not None:
        results["growth_transfer"] = checks.check_growth_transfer(f_e, f, fld, cert, samples, tol, seed)
    hyp = checks.check_convexity(f_e, fld, samples, tol, "gradient", seed)
    skipped = {}
    if hyp.passed:
        results["convexity"] = checks.check_convexity(f, fld, samples, tol, "gradient", seed)
    else:
        skipped["convexity"] = "f_e is not convex in its gradient argument"
    if not f_e.uses_u:
        results["u_independence"] = checks.check_u_independence(f, fld, samples, seed)
    else:
        skipped["u_independence"] = "f_e reads u"
    report["checks"].update({k: v.to_dict() for k, v in results.items()})
    report["skipped"] = skipped
    report["tol"] = tol
    report["pass"] = all(r.passed for r in results.values())
    try:
        spec = transform_spec(f_e, fld)
    except InputError:
        spec = None
    write_json(_out(args, "transformed.json"), {"lagrangian": spec, "manifest": _manifest(args)})
    write_json(_out(args, "transform_report.json"), report)
    for name, r in results.items():
        print(f"{'PASS' if r.passed else 'FAIL'} {name}: residual {r.worst:.3e} (tol {r.tol:g})")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _compare(args, spec1, spec2, domain):
    corpus = functional.smooth_corpus(domain, args.corpus, args.seed)
    tol = _pick_tol(args, 1e-9)
    rep = functional.compare_functionals(spec1, spec2, corpus, tol)
    report = {"manifest": _manifest(args), "seed": args.seed, "tol": tol, "corpus": args.corpus,
              "grid": domain.to_json(), "check": rep.to_dict()}
    write_json(_out(args, "compare.json"), report)
    write_atomic(_out(args, "compare.csv"), functional.comparison_csv(rep.rows))
    print(f"{'PASS' if rep.passed else 'FAIL'} compare: max relative difference {rep.worst:.3e} "
          f"over {rep.samples} functions (tol {tol:g})")
    if not rep.passed:
        _print_witness(rep)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_eval(args):
    spec = parse_spec_arg(args.spec, args.p)
    domain = _grid_for(spec, args)
    if args.against:
        return _compare(args, spec, parse_spec_arg(args.against, args.p), domain)
    if args.u is None:
        raise InputError("eval needs a function u (or --against for comparison mode)")
    u = grid.sample(domain, args.u)
    box = parse_box(args.box, domain.n) if args.box else grid.whole(domain)
    rep = functional.functional_report(spec, u, box)
    out = {"manifest": _manifest(args), "seed": args.seed, "u": args.u, "grid": domain.to_json(),
           "spec": _spec_json(spec), **rep.to_dict()}
    write_json(_out(args, "eval.json"), out)
    write_atomic(_out(args, "eval.csv"), rep.to_csv())
    print(repr(rep.value))
    return EXIT_OK


def _spec_json(spec):
    try:
        return spec.to_json()
    except InputError:
        return {"lagrangian": spec.lagrangian.name, "field": spec.field.name, "p": spec.p}


def cmd_compare(args):
    spec1 = parse_spec_arg(args.spec1, args.p)
    spec2 = parse_spec_arg(args.spec2, args.p)
    return _compare(args, spec1, spec2, _grid_for(spec1, args))


def _bundled_config(name):
    return json.loads(resources.files("anisolag").joinpath("data", f"{name}.json").read_text(encoding="utf-8"))


def cmd_gamma(args):
    obj = _bundled_config(args.config) if args.config in BUNDLED else load_json_arg(args.config)
    if not isinstance(obj, dict):
        raise InputError("config must be a JSON object")
    if args.seed_given:
        obj = dict(obj, seed=args.seed)
    if args.tol is not None:
        obj = dict(obj, tolerances=dict(obj.get("tolerances", {}), energy=args.tol))
    config = gamma.config_from_json(obj, grid_override=args.grid)
    report = gamma.run_gamma_experiment(config)
    manifest = RunManifest("gamma", args.config, config.seed, args.out, tool_version()).to_json()
    write_json(_out(args, "gamma_report.json"), dict(report.to_dict(), manifest=manifest))
    write_atomic(_out(args, "gamma.csv"), report.to_csv())
    print(f"{'PASS' if report.passed else 'FAIL'} gamma {config.name}: E_limit {report.limit_energy:.10g}, "
          f"extrapolated E_h {report.extrapolated_energy:.10g}")
    for h, e in zip(report.h_values, report.energies):
        print(f"  h={h:<6g} E_h={e:.10g}")
    for c in report.recovery_checks:
        print(f"  recovery {c['probe']}: {'pass' if c['pass'] else 'FAIL'} (sup tail gap {c['sup_gap_tail']:.3e})")
    bad = [c for c in report.liminf_checks if not c["pass"]]
    print(f"  liminf: {len(report.liminf_checks) - len(bad)}/{len(report.liminf_checks)} sequences pass")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_catalog(args):
    out = {
        "fields": [{"name": f.name, "n": f.n, "m": f.m, "domain": {"lo": list(f.lo), "hi": list(f.hi)},
                    "lipschitz_hint": f.lipschitz_hint} for f in map(fields.get_field, fields.catalog())],
        "sequences": list(fields.SEQUENCES),
        "lagrangians": {EUCLIDEAN: list(EUCLIDEAN_CATALOG), ANISOTROPIC: list(ANISOTROPIC_CATALOG)},
        "gamma_configs": list(BUNDLED),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


# Parser ------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--samples", type=int, default=None, help="number of sampled points")
    common.add_argument("--tol", type=float, default=None, help="override the check tolerance")
    common.add_argument("--grid", type=int, default=None, help="nodes per axis")
    common.add_argument("--out", default=DEFAULT_OUT, help=f"output directory (default {DEFAULT_OUT})")

    parser = argparse.ArgumentParser(prog="anisolag", description="Anisotropic Lagrangians and integral functionals")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-pinv", parents=[common], help="pseudo-inverse identities over a field or matrix")
    p.add_argument("spec", help="field name, field JSON or matrix JSON {rows, cols, entries}")
    p.set_defaults(func=cmd_verify_pinv)

    p = sub.add_parser("transform", parents=[common], help="build f from a Euclidean Lagrangian")
    p.add_argument("f_e", help="catalog name, name(k=v), DSL source in x, u, z, or JSON")
    p.add_argument("field", help="field name or JSON")
    p.add_argument("--certificate", help="growth certificate JSON {a, b, c, d, p}")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("eval", parents=[common], help="evaluate F(u, A)")
    p.add_argument("spec", help="LAGRANGIAN@FIELD or functional spec JSON")
    p.add_argument("u", nargs="?", help="function of x1..xn")
    p.add_argument("--box", help="integration box lo1,lo2:hi1,hi2 (default: whole grid)")
    p.add_argument("--domain", help="grid box lo1,lo2:hi1,hi2 (default: the field domain)")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--against", help="second spec; compare over the default corpus instead")
    p.add_argument("--corpus", type=int, default=50, help="corpus size in comparison mode")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="compare two functionals over a corpus")
    p.add_argument("spec1")
    p.add_argument("spec2")
    p.add_argument("--domain", help="grid box lo1,lo2:hi1,hi2 (default: the first field's domain)")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--corpus", type=int, default=50, help="number of smooth test functions")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gamma", parents=[common], help="run a Gamma-convergence experiment")
    p.add_argument("config", help=f"config JSON path or a bundled name ({', '.join(BUNDLED)})")
    p.set_defaults(func=cmd_gamma)

    p = sub.add_parser("catalog", parents=[common], help="list fields, sequences and Lagrangians")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.grid is None and args.command in ("eval", "compare"):
        args.grid = 65
    try:
        return args.func(args)
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        if exc.report is not None and getattr(exc.report, "witness", None) is not None:
            _print_witness(exc.report)
        return EXIT_HYPOTHESIS
    except (InputError, LookupFailure) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OptimizationError, NonConvergenceError, ConsistencyError) as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except AnisolagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
