"""Experiment runners for the three worked examples and the invariant suite.

Every report is a plain dict with a schema version, the configuration, its hash and
the tolerances used, so it serialises to byte-identical JSON for a fixed seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import covering as cov
from .cube import Cube, check_delta_properties, delta
from .czo import KERNELS, apply_T_eps, check_cz_conditions
from .kernels import KernelProfile, apply_S, apply_S_adjoint, check_kernel_lemmas, mass_window
from .lattice import build_lattice, check_increments, check_lattice
from .maximal import M_lambda, N_phi, N_sup, fractional_integral
from .measure import DiscreteMeasure, generate, verify_growth
from .weights import (Weight, constant_weight, dual_weight, reverse_holder_probe,
                      sawyer_constants, w0, w_bad)

__all__ = [
    "SCHEMA",
    "ExperimentConfig",
    "config_hash",
    "to_json_bytes",
    "random_functions",
    "run_example_1",
    "run_example_2",
    "run_example_3",
    "run_invariant_suite",
]

SCHEMA = 1

TOLERANCES = {
    "growth_tol": 0.05,
    "eps_frac": 0.05,
    "mass_window": [0.88, 1.131],
    "equivalence_C": 50.0,
    "domination_C": 50.0,
    "duality_rel": 1e-9,
    "involution_rel": 1e-12,
    "scaling_rel": 1e-10,
    "w0_stability": 0.10,
    "growth_factor": 2.0,
}


@dataclass
class ExperimentConfig:
    measure: dict = field(default_factory=lambda: {"kind": "saksman_intervals", "K": 6})
    A: float = 40.0
    k_span: int = 64
    lipschitz: bool = False
    p: float = 2.0
    seed: int = 0
    n_functions: int = 20
    fault_measure: dict = field(
        default_factory=lambda: {"kind": "log_cluster", "rho": 0.97, "levels": 1200})

    def to_dict(self) -> dict:
        return asdict(self)


def _clean(obj):
    """Recursively convert numpy scalars and arrays so json can serialise them."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, Cube):
        return {"center": _clean(obj.center), "side": _clean(obj.side)}
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def to_json_bytes(report: dict) -> bytes:
    return (json.dumps(_clean(report), sort_keys=True, indent=2) + "\n").encode()


def _envelope(name: str, config: dict, results, checks: dict) -> dict:
    return {
        "schema": SCHEMA,
        "experiment": name,
        "config": config,
        "config_hash": config_hash(config),
        "tolerances": TOLERANCES,
        "results": results,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }


def _check(value, threshold, passed) -> dict:
    return {"value": value, "threshold": threshold, "passed": bool(passed)}


def random_functions(m: DiscreteMeasure, count: int, seed: int) -> np.ndarray:
    """Non-negative test functions: the constant, a spike, sparse and dense random profiles."""
    rng = np.random.default_rng(seed)
    F = rng.random((m.size, count)) ** 3
    if count > 1:
        F[:, 1] = 0.0
        F[rng.integers(m.size), 1] = 1.0
    if count > 2:
        sparse = max(2, count // 4)
        F[:, 2:2 + sparse] *= rng.random((m.size, min(sparse, count - 2))) < 0.05
    F[:, 0] = 1.0
    empty = ~F.any(axis=0)
    F[0, empty] = 1.0
    return F


def _window(ratio: np.ndarray) -> dict:
    lo, hi = float(np.min(ratio)), float(np.max(ratio))
    return {"min": lo, "max": hi, "C": max(hi, 1 / lo) if lo > 0 else math.inf}


# ----------------------------------------------------------------------------- examples

def run_example_1(res: int = 256, A: float = 40.0, n_functions: int = 20, seed: int = 0) -> dict:
    """N against the centred maximal function on a segment in the plane, at res and 2 res."""
    config = {"res": res, "A": A, "n_functions": n_functions, "seed": seed}
    rows = []
    for r in (res, 2 * res):
        m = generate("ad_regular_line", res=r)
        P = KernelProfile(build_lattice(m, A))
        F = random_functions(m, n_functions, seed)
        M = M_lambda(m, F, 1.0)
        rows.append({"res": r, "N_sup_over_M": _window(N_sup(P, F) / M),
                     "N_phi_over_M": _window(N_phi(m, F) / M)})
    drift = abs(rows[1]["N_sup_over_M"]["C"] / rows[0]["N_sup_over_M"]["C"] - 1)
    checks = {
        "window_C": _check(rows[0]["N_sup_over_M"]["C"], TOLERANCES["equivalence_C"],
                           rows[0]["N_sup_over_M"]["C"] <= TOLERANCES["equivalence_C"]),
        "resolution_drift": _check(drift, 0.2, drift <= 0.2),
    }
    return _envelope("ex1", config, rows, checks)


def run_example_2(res: int = 30, A: float = 40.0, n_functions: int = 20, seed: int = 0) -> dict:
    """N against the fractional integral I_1 on the unit square with n = 1."""
    config = {"res": res, "A": A, "n_functions": n_functions, "seed": seed}
    rows = []
    for r in (res, 2 * res):
        m = generate("lebesgue_square", res=r)
        L = build_lattice(m, A)
        P = KernelProfile(L)
        F = random_functions(m, n_functions, seed)
        sub = np.zeros(m.size)
        sub[np.all(m.points <= 0.5, axis=1)] = 1.0
        F[:, -1] = sub
        I1 = fractional_integral(m, F, core=L.core_floor())
        rows.append({"res": r, "transit_cubes": L.n_transit(),
                     "N_over_I1": _window(N_sup(P, F) / I1)})
    C = rows[0]["N_over_I1"]["C"]
    drift = abs(rows[1]["N_over_I1"]["C"] / C - 1)
    checks = {
        "window_C": _check(C, TOLERANCES["equivalence_C"], C <= TOLERANCES["equivalence_C"]),
        "resolution_drift": _check(drift, 0.2, drift <= 0.2),
    }
    return _envelope("ex2", config, rows, checks)


def run_example_3(K_max: int = 8, p: float = 2.0, A: float = 40.0, res: int = 10,
                  rh_eps: float = 0.5) -> dict:
    """Sawyer constants of w0 and w_bad on the interval family for K = 4..K_max, and the
    reverse Hoelder partial sums of w0."""
    if K_max < 6:
        raise ValueError("K_max must be at least 6")
    config = {"K_max": K_max, "p": p, "A": A, "res": res, "rh_eps": rh_eps}
    table = {}
    for K in range(4, K_max + 1):
        m = generate("saksman_intervals", K=K, res=res)
        P = KernelProfile(build_lattice(m, A))
        good, bad = sawyer_constants(P, w0(m, p)), sawyer_constants(P, w_bad(m, p))
        table[K] = {"w0_strong": good.strong_const, "w0_dual": good.dual_const,
                    "wbad_strong": bad.strong_const, "wbad_dual": bad.dual_const}
    m = generate("saksman_intervals", K=K_max, res=res)
    ks = list(range(4, K_max + 1))
    rh = reverse_holder_probe(m, w0(m, p), rh_eps, ks)
    rh0 = reverse_holder_probe(m, w0(m, p), 0.0, ks)
    change = abs(table[8]["w0_dual"] / table[6]["w0_dual"] - 1) if K_max >= 8 else math.nan
    growth = table[8]["wbad_dual"] / table[6]["wbad_dual"] if K_max >= 8 else math.nan
    rh_ratio = math.exp(rh.log_sums[ks.index(8)] - rh.log_sums[ks.index(6)]) \
        if K_max >= 8 else math.nan
    checks = {
        "w0_dual_stable": _check(change, TOLERANCES["w0_stability"],
                                 change < TOLERANCES["w0_stability"]),
        "wbad_dual_growth": _check(growth, TOLERANCES["growth_factor"],
                                   growth >= TOLERANCES["growth_factor"]),
        "rh_sum_growth": _check(rh_ratio, TOLERANCES["growth_factor"],
                                rh_ratio >= TOLERANCES["growth_factor"]),
    }
    results = {"table": table,
               "rh": {"K": ks, "eps": rh_eps, "sums": rh.sums, "log_sums": rh.log_sums},
               "rh_eps0": {"K": ks, "sums": rh0.sums}}
    return _envelope("ex3", config, results, checks)


# ----------------------------------------------------------------------------- suite

def _report(rep) -> dict:
    return {"passed": bool(rep.passed), "stats": rep.stats}


def run_invariant_suite(config: ExperimentConfig | None = None) -> dict:
    """Evaluate the invariants of every module on one measure and report pass/fail per block."""
    cfg = config or ExperimentConfig()
    desc = dict(cfg.measure)
    m = generate(desc.pop("kind"), **desc)
    rng = np.random.default_rng(cfg.seed)
    L = build_lattice(m, cfg.A, cfg.k_span, lipschitz=cfg.lipschitz)
    P = KernelProfile(L)
    out: dict[str, dict] = {}

    g = verify_growth(m, tol=TOLERANCES["growth_tol"], seed=cfg.seed)
    out["measure.growth"] = {"passed": bool(g.passed),
                             "stats": {"normalized_ratio": g.normalized_ratio, "c0": m.c0}}

    queries, bad = 200, 0
    for _ in range(queries):
        x = m.points[rng.integers(m.size)] + rng.normal(size=m.d) * 0.05
        r = float(rng.uniform(0, m.diam))
        brute = float(m.masses[np.linalg.norm(m.points - x, axis=1) <= r].sum())
        bad += not math.isclose(m.mass_of(m.ball_indices(x, r)), brute, rel_tol=1e-10,
                                abs_tol=1e-300)
    out["measure.index_brute_force"] = {"passed": bad == 0,
                                        "stats": {"queries": queries, "mismatches": bad}}

    out["cube.delta"] = _report(check_delta_properties(m, 200, cfg.seed))
    mono_bad = 0
    for _ in range(100):
        c = m.points[rng.integers(m.size)]
        s = float(m.floor.max()) * 10 ** rng.uniform(0, 2)
        mono_bad += delta(m, Cube(c, s), Cube(c, 2 * s)) > delta(m, Cube(c, s), Cube(c, 4 * s))
    out["cube.delta_monotone"] = {"passed": mono_bad == 0, "stats": {"violations": mono_bad}}

    out["lattice.invariants"] = _report(check_lattice(L, seed=cfg.seed))
    fdesc = dict(cfg.fault_measure)
    mf = generate(fdesc.pop("kind"), **fdesc)
    Lf = build_lattice(mf, cfg.A)
    clean, broken = check_increments(Lf), check_increments(Lf.perturbed(0.1, cfg.seed))
    out["lattice.fault_injection"] = {
        "passed": bool(clean.passed and not broken.passed and "increment" in broken.witnesses),
        "stats": {"clean_deviation": clean.stats["max_increment_deviation"],
                  "perturbed_deviation": broken.stats["max_increment_deviation"],
                  "eps_tol": broken.stats["eps_tol"]},
    }

    out["kernels.lemmas"] = _report(check_kernel_lemmas(P, 200, cfg.seed))
    win = mass_window(P)
    lo, hi = TOLERANCES["mass_window"]
    out["kernels.mass_window"] = {
        "passed": win["count"] == 0 or (win["min"] >= lo and win["max"] <= hi),
        "stats": {"min": win["min"], "max": win["max"], "tested": win["count"]}}
    F = random_functions(m, cfg.n_functions, cfg.seed)
    G = rng.normal(size=(m.size, cfg.n_functions))
    dual_err, linf, mono = 0.0, 0.0, True
    for k in P.levels:
        SF, SG = apply_S(P, k, F), apply_S_adjoint(P, k, G)
        lhs = np.einsum("ij,ij,i->j", SF, G, m.masses)
        rhs = np.einsum("ij,ij,i->j", F, SG, m.masses)
        dual_err = max(dual_err, float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-300))))
        linf = max(linf, float(np.max(np.abs(SF) / np.abs(F).max(axis=0))))
        mono &= bool(np.all(apply_S(P, k, F + np.abs(G)) >= SF - 1e-12))
    out["kernels.duality"] = {"passed": dual_err <= TOLERANCES["duality_rel"],
                              "stats": {"max_rel_error": dual_err}}
    out["kernels.linf_bound"] = {"passed": linf <= 10 / 9 + 0.02, "stats": {"max_ratio": linf}}
    out["kernels.monotone"] = {"passed": mono, "stats": {}}

    Ns, Np, M1 = N_sup(P, F), N_phi(m, F), M_lambda(m, F, 1.0)
    eq = _window(Np / Ns)
    dom = float(np.max(Ns / M1))
    out["maximal.equivalence"] = {"passed": eq["C"] <= TOLERANCES["equivalence_C"], "stats": eq}
    out["maximal.domination"] = {"passed": dom <= TOLERANCES["domination_C"],
                                 "stats": {"C": dom}}
    H = F[:, ::-1]
    sub = bool(np.all(N_sup(P, F + H) <= Ns + N_sup(P, H) + 1e-12))
    homog = bool(np.allclose(N_sup(P, -3.0 * F), 3.0 * Ns, rtol=1e-12, atol=0))
    out["maximal.sublinear"] = {"passed": sub and homog, "stats": {}}

    cz = {}
    for name in ("hilbert", "frac_I1", "cauchy_re", "cauchy_im"):
        rep = check_cz_conditions(KERNELS[name], 2000, cfg.seed)
        cz[name] = rep.stats["max_smooth_ratio"]
        if not rep.passed:
            cz["failed"] = name
    out["czo.conditions"] = {"passed": "failed" not in cz, "stats": cz}
    if m.d == 1:
        eps = float(m.spacing.min()) / 2
        Th = np.column_stack([apply_T_eps(m, KERNELS["hilbert"], F[:, j], eps)
                              for j in range(F.shape[1])])
        I1 = fractional_integral(m, F)
        out["czo.domination"] = {"passed": bool(np.all(np.abs(Th) <= I1 * (1 + 1e-12))),
                                 "stats": {}}

    w = w0(m, cfg.p) if _is_saksman(cfg.measure) else \
        Weight(m, 1 + rng.random(m.size), cfg.p)
    sig = dual_weight(w)
    back = dual_weight(Weight(m, sig.values, sig.p))
    inv = float(np.max(np.abs(back.values / w.values - 1)))
    out["weights.involution"] = {"passed": inv <= TOLERANCES["involution_rel"],
                                 "stats": {"max_rel_error": inv}}
    fam_seed = cfg.seed
    r1 = sawyer_constants(P, w, seed=fam_seed)
    r2 = sawyer_constants(P, sig, seed=fam_seed)
    r3 = sawyer_constants(P, w.scaled(7.5), seed=fam_seed)
    sym = math.isclose(r1.dual_const, r2.strong_const, rel_tol=1e-12)
    scale = (math.isclose(r1.dual_const, r3.dual_const, rel_tol=TOLERANCES["scaling_rel"])
             and math.isclose(r1.strong_const, r3.strong_const, rel_tol=TOLERANCES["scaling_rel"]))
    out["weights.sawyer_symmetry"] = {"passed": sym,
                                      "stats": {"dual": r1.dual_const, "swapped": r2.strong_const}}
    out["weights.sawyer_scaling"] = {"passed": scale,
                                     "stats": {"dual": r1.dual_const, "scaled": r3.dual_const}}
    one = sawyer_constants(P, constant_weight(m, 1.0, 2.0), seed=fam_seed)
    out["weights.unit_weight"] = {
        "passed": max(one.strong_const, one.dual_const) <= (10 / 9 + 0.02) ** 2,
        "stats": {"strong": one.strong_const, "dual": one.dual_const}}

    out["covering"] = _covering_block(cfg.seed)
    passed = all(v["passed"] for v in out.values())
    conf = cfg.to_dict()
    return {"schema": SCHEMA, "experiment": "suite", "config": conf,
            "config_hash": config_hash(conf), "tolerances": TOLERANCES,
            "results": out, "passed": passed}


def _is_saksman(desc: dict) -> bool:
    return desc.get("kind") == "saksman_intervals"


def _covering_block(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    root = Cube([0.5, 0.5], 1.0)
    stats, ok = {}, True
    for region in (cov.interior_of_box([0, 0], [1, 1]), cov.half_space([1.0, 0.3], 0.4),
                   cov.open_ball([0.5, 0.5], 0.4)):
        cert = cov.whitney_certificate(cov.whitney(region, root, max_depth=7))
        stats[f"whitney.{region.name}"] = cert["overlap_4q"]
        ok &= cert["passed"]
    for t in range(10):
        d = 1 + t % 2
        n = int(rng.integers(5, 200))
        cubes = [Cube(rng.random(d) * 10, 10 ** rng.uniform(-2, 0.5)) for _ in range(n)]
        A = np.array([Q.center + (rng.random(d) - 0.5) * Q.side for Q in cubes])
        ok &= cov.wiener_select(cubes, A).certificate["passed"]
        cubes = [Cube(a, 10 ** rng.uniform(-2, 0.5)) for a in A]
        ok &= cov.besicovitch_select(A, cubes).certificate["passed"]
    return {"passed": bool(ok), "stats": stats}
