"""Command-line front end. Every command emits JSON (or CSV for ``op apply``) and exits 0
only when all asserted properties hold."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import covering as cov
from .cube import Cube
from .czo import apply_T_eps, apply_T_star, get_kernel
from .experiments import (SCHEMA, TOLERANCES, ExperimentConfig, _clean, config_hash,
                          run_example_1, run_example_2, run_example_3, run_invariant_suite,
                          to_json_bytes)
from .kernels import KernelProfile, apply_S, check_kernel_lemmas, mass_window
from .lattice import build_lattice, check_lattice
from .maximal import M_lambda, M_radial, N_phi, N_sup
from .measure import GENERATORS, dump_measure, generate, load_measure, verify_growth
from .weights import (Weight, constant_weight, reverse_holder_probe, sawyer_constants, w0,
                      w_bad, z_infty_estimate)

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
DEFAULT_KIND = "saksman_intervals"


def _param(text: str):
    key, _, raw = text.partition("=")
    if not key or not _:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _add_measure_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--measure", type=Path, help="measure JSON file")
    src.add_argument("--kind", choices=sorted(GENERATORS),
                     help="built-in generator (default: saksman_intervals)")
    p.add_argument("--param", type=_param, action="append", default=[],
                   help="generator parameter key=value (repeatable)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--json", action="store_true", help="print the full JSON report")


def _measure(args):
    if args.measure is not None:
        return load_measure(args.measure), {"file": str(args.measure)}
    kind = args.kind or DEFAULT_KIND
    params = dict(args.param)
    return generate(kind, **params), {"kind": kind, **params}


def _emit(args, report: dict) -> int:
    report.setdefault("schema", SCHEMA)
    payload = to_json_bytes(report)
    if args.out is not None:
        args.out.write_bytes(payload)
    if args.json or args.out is None and not report.get("_summary_only"):
        sys.stdout.write(payload.decode())
    elif args.out is not None:
        print(f"{'PASS' if report.get('passed', True) else 'FAIL'} -> {args.out}")
    return EXIT_OK if report.get("passed", True) else EXIT_FAIL


def _wrap(command: str, config: dict, results, passed: bool) -> dict:
    return {"schema": SCHEMA, "command": command, "config": config,
            "config_hash": config_hash(config), "tolerances": TOLERANCES,
            "results": results, "passed": bool(passed)}


# ----------------------------------------------------------------------------- commands

def cmd_measure_gen(args) -> int:
    m, desc = _measure(args)
    if args.out is None:
        sys.stdout.write(json.dumps(m.to_json()) + "\n")
    else:
        dump_measure(m, args.out)
    return EXIT_OK


def cmd_measure_verify(args) -> int:
    m, desc = _measure(args)
    rep = verify_growth(m, samples=args.samples, tol=args.tol, seed=args.seed)
    results = {"max_ratio": rep.max_ratio, "normalized_ratio": rep.normalized_ratio,
               "worst_pair": rep.worst_pair, "c0": m.c0, "pairs": rep.n_pairs}
    cfg = {"measure": desc, "samples": args.samples, "tol": args.tol, "seed": args.seed}
    return _emit(args, _wrap("measure verify", cfg, results, rep.passed))


def cmd_lattice_build(args) -> int:
    m, desc = _measure(args)
    L = build_lattice(m, args.A, args.k_span, lipschitz=args.lipschitz)
    rep = check_lattice(L, seed=args.seed)
    cfg = {"measure": desc, "A": args.A, "k_span": args.k_span, "lipschitz": args.lipschitz,
           "seed": args.seed}
    results = {"lattice": L.to_json(), "k_max": L.k_max, "transit_cubes": L.n_transit(),
               "epsilon_observed": L.epsilon_observed, "invariants": rep.stats}
    return _emit(args, _wrap("lattice build", cfg, results, rep.passed))


def _load_f(desc: str | None, size: int) -> np.ndarray:
    if desc is None or desc == "ones":
        return np.ones(size)
    data = json.loads(Path(desc).read_text())
    f = np.asarray(data["values"] if isinstance(data, dict) else data, dtype=float)
    if f.shape != (size,):
        raise ValueError(f"function has {f.size} values, measure has {size} atoms")
    return f


def cmd_op_apply(args) -> int:
    m, desc = _measure(args)
    f = _load_f(args.f, m.size)
    op = args.op
    if op in ("N", "Sk"):
        P = KernelProfile(build_lattice(m, args.A, lipschitz=args.lipschitz))
        k = args.k if args.k is not None else P.lattice.k_min + 1
        values = N_sup(P, f) if op == "N" else apply_S(P, k, f)
    elif op == "Nphi":
        values = N_phi(m, f)
    elif op == "Mlambda":
        values = M_lambda(m, f, args.lam)
    elif op == "MR":
        values = M_radial(m, f)
    elif op == "Teps":
        eps = args.eps if args.eps is not None else float(m.spacing.min()) / 2
        values = apply_T_eps(m, get_kernel(args.kernel), f, eps)
    else:
        values = apply_T_star(m, get_kernel(args.kernel), f)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(m.d)] + ["mass", "f", op])
    for p, w, fv, v in zip(m.points, m.masses, f, values):
        writer.writerow([repr(float(c)) for c in p] + [repr(float(w)), repr(float(fv)),
                                                        repr(float(v))])
    text = buf.getvalue()
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    m, desc = _measure(args)
    P = KernelProfile(build_lattice(m, args.A, lipschitz=args.lipschitz))
    rep = check_kernel_lemmas(P, args.trials, args.seed)
    win = mass_window(P)
    lo, hi = TOLERANCES["mass_window"]
    win_ok = win["count"] == 0 or (win["min"] >= lo and win["max"] <= hi)
    cfg = {"measure": desc, "A": args.A, "lipschitz": args.lipschitz, "trials": args.trials,
           "seed": args.seed}
    results = {"lemmas": rep.stats, "mass_window": win}
    return _emit(args, _wrap("kernel check", cfg, results, rep.passed and win_ok))


def _weight(text: str, m, p: float) -> Weight:
    if text == "builtin:w0":
        return w0(m, p)
    if text == "builtin:wbad":
        return w_bad(m, p)
    if text == "builtin:one":
        return constant_weight(m, 1.0, p)
    data = json.loads(Path(text).read_text())
    return Weight(m, np.asarray(data["values"] if isinstance(data, dict) else data), p)


def cmd_weight_test(args) -> int:
    m, desc = _measure(args)
    P = KernelProfile(build_lattice(m, args.A))
    w = _weight(args.w, m, args.p)
    rep = sawyer_constants(P, w, seed=args.seed)
    results = {"sawyer": rep.to_json()}
    if args.zinfty:
        z = z_infty_estimate(P, w, trials=args.trials, seed=args.seed)
        results["z_infty"] = {"tau_hat": z.tau_hat, "admissible": z.admissible,
                              "tried": z.tried, "witness": z.witness}
    if args.rh_eps is not None:
        ks = list(range(2, int(np.max(np.rint(1 / m.points[:, 0]))) + 1))
        rh = reverse_holder_probe(m, w, args.rh_eps, ks)
        results["reverse_holder"] = {"K": rh.K_list, "log_sums": rh.log_sums,
                                     "ratio": rh.ratio, "diverges": rh.diverges}
    cfg = {"measure": desc, "A": args.A, "w": args.w, "p": args.p, "seed": args.seed,
           "zinfty": args.zinfty, "rh_eps": args.rh_eps}
    finite = np.isfinite(rep.strong_const) and np.isfinite(rep.dual_const)
    return _emit(args, _wrap("weight test", cfg, results, finite))


def _region(desc: dict) -> cov.Region:
    kind = desc["kind"]
    if kind == "box":
        return cov.interior_of_box(desc["lo"], desc["hi"])
    if kind == "half_space":
        return cov.half_space(desc["normal"], desc["offset"])
    if kind == "ball":
        return cov.open_ball(desc["center"], desc["radius"])
    if kind == "empty":
        return cov.empty_region()
    raise ValueError(f"unknown region kind {kind!r}")


def _cube(obj) -> Cube:
    return Cube(obj["center"], obj["side"])


def cmd_cover(args) -> int:
    data = json.loads(Path(args.input).read_text()) if args.input else {}
    if args.algorithm == "whitney":
        region = _region(data.get("region", {"kind": "box", "lo": [0, 0], "hi": [1, 1]}))
        root = _cube(data.get("root", {"center": [0.5, 0.5], "side": 1.0}))
        W = cov.whitney(region, root, int(data.get("max_depth", 7)))
        cert = cov.whitney_certificate(W)
        results = {"cubes": [{"center": Q.center, "side": Q.side} for Q in W.cubes],
                   "incomplete": len(W.incomplete), "certificate": cert}
    elif args.algorithm == "wiener":
        cubes = [_cube(c) for c in data["cubes"]]
        res = cov.wiener_select(cubes, data.get("points"))
        cert = res.certificate
        results = {"selected": res.selected, "certificate": cert}
    else:
        pts = np.atleast_2d(np.asarray(data["points"], dtype=float))
        if pts.shape[0] == 1 and len(data["points"]) != 1:
            pts = pts.T
        cubes = [Cube(p, s) for p, s in zip(pts, data["sides"])]
        res = cov.besicovitch_select(pts, cubes)
        cert = res.certificate
        results = {"selected": res.selected, "certificate": cert}
    cfg = {"algorithm": args.algorithm, "input": _clean(data)}
    return _emit(args, _wrap(f"cover {args.algorithm}", cfg, results, cert["passed"]))


def cmd_experiment(args) -> int:
    name = args.name
    if name == "ex1":
        report = run_example_1(args.res or 256, args.A, seed=args.seed)
    elif name == "ex2":
        report = run_example_2(args.res or 30, args.A, seed=args.seed)
    elif name == "ex3":
        report = run_example_3(args.K_max, args.p, args.A, res=args.res or 10,
                               rh_eps=args.eps if args.eps is not None else 0.5)
    else:
        cfg = ExperimentConfig(A=args.A, p=args.p, seed=args.seed, lipschitz=args.lipschitz)
        if args.measure is not None:
            raise ValueError("the suite takes a generator (--kind/--param), not a file")
        if args.kind is not None or args.param:
            cfg.measure = {"kind": args.kind or DEFAULT_KIND, **dict(args.param)}
        report = run_invariant_suite(cfg)
    return _emit(args, report)


# ----------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nondoubling", description=__doc__)
    sub = parser.add_subparsers(dest="group", required=True)

    meas = sub.add_parser("measure", help="generate or verify measures").add_subparsers(
        dest="action", required=True)
    p = meas.add_parser("gen", help="write a generated measure as JSON")
    _add_measure_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_measure_gen)
    p = meas.add_parser("verify", help="check the growth condition")
    _add_measure_args(p)
    _add_common(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--tol", type=float, default=TOLERANCES["growth_tol"])
    p.set_defaults(func=cmd_measure_verify)

    lat = sub.add_parser("lattice", help="cube lattices").add_subparsers(dest="action",
                                                                          required=True)
    p = lat.add_parser("build", help="build a lattice and check its invariants")
    _add_measure_args(p)
    _add_common(p)
    p.add_argument("--A", type=float, default=40.0)
    p.add_argument("--k-span", type=int, default=64)
    p.add_argument("--lipschitz", action="store_true")
    p.set_defaults(func=cmd_lattice_build)

    op = sub.add_parser("op", help="apply operators").add_subparsers(dest="action", required=True)
    p = op.add_parser("apply", help="apply an operator and write CSV")
    _add_measure_args(p)
    _add_common(p)
    p.add_argument("--op", choices=["N", "Nphi", "Mlambda", "MR", "Sk", "Teps", "Tstar"],
                   required=True)
    p.add_argument("--f", help="JSON file with one value per atom (default: ones)")
    p.add_argument("--A", type=float, default=40.0)
    p.add_argument("--k", type=int)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--eps", type=float)
    p.add_argument("--lipschitz", action="store_true")
    p.set_defaults(func=cmd_op_apply)

    ker = sub.add_parser("kernel", help="kernel checks").add_subparsers(dest="action",
                                                                         required=True)
    p = ker.add_parser("check", help="support, quasi-symmetry, gradient and mass window")
    _add_measure_args(p)
    _add_common(p)
    p.add_argument("--A", type=float, default=40.0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--lipschitz", action="store_true")
    p.set_defaults(func=cmd_kernel_check)

    wt = sub.add_parser("weight", help="weight testers").add_subparsers(dest="action",
                                                                         required=True)
    p = wt.add_parser("test", help="Sawyer constants, Z_infinity and reverse Hoelder probes")
    _add_measure_args(p)
    _add_common(p)
    p.add_argument("--w", default="builtin:w0",
                   help="builtin:w0, builtin:wbad, builtin:one or a JSON file")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--A", type=float, default=40.0)
    p.add_argument("--zinfty", action="store_true")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--rh-eps", type=float)
    p.set_defaults(func=cmd_weight_test)

    p = sub.add_parser("cover", help="covering algorithms with certificates")
    p.add_argument("algorithm", choices=["whitney", "wiener", "besicovitch"])
    p.add_argument("--input", help="JSON geometry")
    _add_common(p)
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("experiment", help="worked examples and the invariant suite")
    p.add_argument("name", choices=["ex1", "ex2", "ex3", "suite"])
    _add_measure_args(p)
    _add_common(p)
    p.add_argument("--A", type=float, default=40.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--eps", type=float, help="reverse Hoelder exponent for ex3")
    p.add_argument("--res", type=int)
    p.add_argument("--K-max", type=int, default=8)
    p.add_argument("--lipschitz", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
