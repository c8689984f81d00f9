"""Weights on the support: dual weights, Sawyer testing constants, Z_infinity search,
reverse Hoelder partial sums and empirical weighted operator norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .cube import Cube
from .czo import apply_T_eps, apply_T_star, get_kernel
from .kernels import BLOCK, KernelProfile, apply_S, kernel_block
from .lattice import ad_class
from .maximal import N_sup
from .measure import DiscreteMeasure, saksman_component

__all__ = [
    "Weight",
    "dual_weight",
    "conjugate",
    "w0",
    "w_bad",
    "constant_weight",
    "SawyerReport",
    "default_cube_family",
    "sawyer_constants",
    "ZInftyReport",
    "z_infty_estimate",
    "RHReport",
    "reverse_holder_probe",
    "weighted_norm_estimate",
]


def conjugate(p: float) -> float:
    if p <= 1:
        raise ValueError("p must exceed 1")
    return p / (p - 1)


@dataclass(frozen=True, eq=False)
class Weight:
    """Positive weight on the atoms, tested at exponent p.

    ``log_values`` is kept alongside the values so factorial-size weights can be
    summed in log space.
    """

    measure: DiscreteMeasure
    values: np.ndarray
    p: float = 2.0
    log_values: np.ndarray | None = None
    source: "Weight | None" = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.measure.size,):
            raise ValueError("one weight value per atom")
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if self.log_values is None:
            if not np.all(v > 0):
                raise ValueError("weights must be positive and finite")
            lv = np.log(v)
        else:
            lv = np.asarray(self.log_values, dtype=float)
        if not np.all(np.isfinite(lv)):
            raise ValueError("weights must be positive and finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "log_values", lv)

    def __array__(self, dtype=None, copy=None):
        return self.values.astype(dtype) if dtype else self.values

    def mass(self, idx=None) -> float:
        """w(E) = sum over atoms of E of w * mass."""
        m = self.measure
        idx = slice(None) if idx is None else idx
        return float(math.fsum(self.values[idx] * m.masses[idx]))

    def scaled(self, c: float) -> "Weight":
        return Weight(self.measure, self.values * c, self.p, self.log_values + math.log(c))


def dual_weight(w: Weight) -> Weight:
    """sigma = w^(-1/(p-1)), tested at the conjugate exponent; dualising twice returns w."""
    if w.source is not None:
        return w.source
    expo = -1.0 / (w.p - 1)
    lv = w.log_values * expo
    return Weight(w.measure, np.exp(lv), conjugate(w.p), lv, source=w)


def _profile_weight(m: DiscreteMeasure, log_of_k, p: float) -> Weight:
    comp = saksman_component(m)
    lv = np.array([log_of_k(int(k)) for k in comp])
    return Weight(m, np.exp(lv), p, lv)


def w0(m: DiscreteMeasure, p: float = 2.0) -> Weight:
    """(k-2)! on the k-th interval for k >= 2, and 1 on the first."""
    return _profile_weight(m, lambda k: math.lgamma(k - 1) if k >= 2 else 0.0, p)


def w_bad(m: DiscreteMeasure, p: float = 2.0) -> Weight:
    """k! k^2 on the k-th interval."""
    return _profile_weight(m, lambda k: math.lgamma(k + 1) + 2 * math.log(k), p)


def constant_weight(m: DiscreteMeasure, c: float = 1.0, p: float = 2.0) -> Weight:
    return Weight(m, np.full(m.size, float(c)), p)


@dataclass
class SawyerReport:
    strong_const: float
    dual_const: float
    strong_witness: tuple | None
    dual_witness: tuple | None
    n_cubes: int
    n_scales: int
    p: float

    def to_json(self) -> dict:
        return {
            "strong_const": self.strong_const, "dual_const": self.dual_const,
            "strong_witness": _jsonable(self.strong_witness),
            "dual_witness": _jsonable(self.dual_witness),
            "n_cubes": self.n_cubes, "n_scales": self.n_scales, "p": self.p,
        }


def _jsonable(wit):
    if wit is None:
        return None
    Q, k = wit
    return {"center": [float(c) for c in Q.center], "side": float(Q.side), "k": int(k)}


def default_cube_family(P: KernelProfile, n_random: int = 200, seed: int = 0,
                        dyadic_cap: int = 256) -> list[Cube]:
    """Lattice cubes (initial, transit and stopping points, deduplicated), dyadic cubes
    of the bounding cube meeting the support, and random atom-centred cubes."""
    L = P.lattice
    m = P.measure
    seen, family = set(), []

    def add(center, side):
        key = (tuple(np.round(center, 12)), round(float(side), 12))
        if key not in seen:
            seen.add(key)
            family.append(Cube(center, side))

    for i in range(m.size):
        for j in range(L.last_transit[i] - L.k_min + 1):
            add(m.points[i], L.sides[i, j])
        add(m.points[i], 0.0)

    lo, hi = m.bounding_box()
    root = float(np.max(hi - lo)) or 1.0
    level = 0
    while 2 ** (m.d * level) <= dyadic_cap:
        side = root / 2 ** level
        for corner in np.ndindex(*([2 ** level] * m.d)):
            c = lo + (np.array(corner) + 0.5) * side
            if len(m.cube_indices(c, side)):
                add(c, side)
        level += 1

    rng = np.random.default_rng(seed)
    small = max(float(m.spacing.min()), 1e-12) if m.size > 1 else 1.0
    big = max(4 * m.diam, 2 * small)
    for _ in range(n_random):
        add(m.points[rng.integers(m.size)], small * (big / small) ** rng.random())
    return family


def sawyer_constants(P: KernelProfile, w: Weight, p: float | None = None,
                     cube_family: list[Cube] | None = None, k_range=None,
                     seed: int = 0) -> SawyerReport:
    """sup over (Q, k) of int |S_k(sigma chi_Q)|^p w / sigma(Q) and of
    int |S_k(w chi_Q)|^p' sigma / w(Q). Cubes of zero weighted mass are skipped."""
    m = P.measure
    p = w.p if p is None else p
    w = w if w.p == p else Weight(m, w.values, p, w.log_values)
    sigma = dual_weight(w)
    q = conjugate(p)
    family = default_cube_family(P, seed=seed) if cube_family is None else list(cube_family)
    if not family:
        raise ValueError("empty cube family")
    ks = list(P.levels if k_range is None else k_range)

    # one column per distinct atom set; singletons are handled in closed form
    members = [m.cube_indices(Q.center, Q.side) for Q in family]
    wm, sm = w.values * m.masses, sigma.values * m.masses
    keep, seen = [], {}
    for j, idx in enumerate(members):
        key = np.sort(idx).tobytes()
        if key in seen or sm[idx].sum() <= 0 or wm[idx].sum() <= 0:
            continue
        seen[key] = j
        keep.append(j)
    fam = [family[j] for j in keep]
    single = np.array([len(members[j]) == 1 for j in keep], dtype=bool)
    solo = np.array([members[j][0] for j, one in zip(keep, single) if one], dtype=int)
    multi = [j for j, one in zip(keep, single) if not one]
    fam_solo = [f for f, one in zip(fam, single) if one]
    fam_multi = [f for f, one in zip(fam, single) if not one]
    chi = np.zeros((m.size, len(multi)))
    for c, j in enumerate(multi):
        chi[members[j], c] = 1.0
    sig_Q, w_Q = sm @ chi, wm @ chi
    X = np.hstack([sigma.values[:, None] * chi, w.values[:, None] * chi]) * m.masses[:, None]
    half = len(multi)

    strong, dual = 0.0, 0.0
    s_wit = d_wit = None
    for k in ks:
        num = np.zeros(2 * half)
        solo_s = np.zeros(len(solo))
        solo_d = np.zeros(len(solo))
        for a in range(0, m.size, BLOCK):
            rows = np.arange(a, min(a + BLOCK, m.size))
            Kb = kernel_block(P, k, rows)
            if half:
                G = np.abs(Kb @ X)
                num[:half] += (G[:, :half] ** p * wm[rows, None]).sum(0)
                num[half:] += (G[:, half:] ** q * sm[rows, None]).sum(0)
            if len(solo):
                col = Kb[:, solo]
                solo_s += (col ** p).T @ wm[rows]
                solo_d += (col ** q).T @ sm[rows]
        # S_k(sigma chi_{x}) = s_k(., x) sigma(x) mass(x), so the ratio scales by sm^(p-1)
        rs = np.concatenate([num[:half] / sig_Q, solo_s * sm[solo] ** (p - 1)])
        rd = np.concatenate([num[half:] / w_Q, solo_d * wm[solo] ** (q - 1)])
        order = fam_multi + fam_solo
        if len(rs) and rs.max() > strong:
            strong, s_wit = float(rs.max()), (order[int(rs.argmax())], k)
        if len(rd) and rd.max() > dual:
            dual, d_wit = float(rd.max()), (order[int(rd.argmax())], k)
    return SawyerReport(strong, dual, s_wit, d_wit, len(fam), len(ks), p)


@dataclass
class ZInftyReport:
    tau_hat: float | None
    admissible: int
    tried: int
    witness: dict | None


def z_infty_estimate(P: KernelProfile, w: Weight, trials: int = 200, seed: int = 0,
                     threshold: float = 0.25) -> ZInftyReport:
    """Randomised upper estimate of the Z_infinity constant tau.

    Samples Q with scale class k and candidate sets A. A pair counts when
    S_{k+3} chi_A >= 1/4 at every atom of Q outside the stopping set at k + 3,
    and Q holds at least one such atom; tau_hat is the least w(A cap 2Q) / w(Q).
    """
    L = P.lattice
    m = P.measure
    rng = np.random.default_rng(seed)
    ks = [k for k in P.levels if k + 3 <= int(L.last_transit.max())]
    best, wit, admissible, tried = math.inf, None, 0, 0
    if not ks:
        return ZInftyReport(None, 0, 0, None)
    wm = w.values * m.masses
    for _ in range(trials):
        k = int(rng.choice(ks))
        cands = np.flatnonzero(L.last_transit >= k)
        i = int(rng.choice(cands))
        side = L.side(i, k)
        if rng.random() < 0.5:
            side *= 1 + rng.random() * 0.5
        Q = Cube(m.points[i], side)
        if ad_class(L, Q) != k:
            continue
        inQ = m.cube_indices(Q.center, Q.side)
        in2Q = m.cube_indices(Q.center, 2 * Q.side)
        active = inQ[L.last_transit[inQ] >= k + 3]
        if len(active) == 0:
            continue
        sets = _candidate_sets(m, w, Q, in2Q, rng)
        tried += len(sets)
        masks = np.zeros((m.size, len(sets)))
        for j, A in enumerate(sets):
            masks[A, j] = 1.0
        S = apply_S(P, k + 3, masks)
        ok = np.all(S[active] >= threshold, axis=0)
        wQ = float(wm[inQ].sum())
        for j in np.flatnonzero(ok):
            admissible += 1
            A2Q = np.intersect1d(sets[j], in2Q)
            ratio = float(wm[A2Q].sum()) / wQ
            if ratio < best:
                best = ratio
                wit = {"k": k, "center": Q.center.tolist(), "side": Q.side,
                       "set_size": int(len(sets[j]))}
    return ZInftyReport(best if admissible else None, admissible, tried, wit)


def _candidate_sets(m, w: Weight, Q: Cube, in2Q: np.ndarray, rng) -> list[np.ndarray]:
    everything = np.arange(m.size)
    sets = [everything]
    for q in (0.5, 0.8, 0.95):
        sets.append(everything[rng.random(m.size) < q])
    # unions of random sub-cubes of 2Q together with everything outside 2Q
    outside = np.setdiff1d(everything, in2Q)
    for _ in range(3):
        centres = m.points[rng.choice(in2Q, size=min(4, len(in2Q)), replace=False)]
        picked = [m.cube_indices(c, Q.side * rng.uniform(0.1, 0.6)) for c in centres]
        sets.append(np.union1d(outside, np.concatenate(picked)))
    # drop the heaviest-weight atoms of 2Q
    heavy = in2Q[np.argsort(-w.values[in2Q], kind="stable")]
    for frac in (0.1, 0.3, 0.5):
        cut = heavy[: max(1, int(frac * len(heavy)))]
        sets.append(np.setdiff1d(everything, cut))
    return sets


@dataclass
class RHReport:
    K_list: list
    log_sums: list
    sums: list
    ratio: float
    diverges: bool
    overflow_at: int | None


def reverse_holder_probe(m: DiscreteMeasure, w: Weight, eps: float, K_list,
                         threshold: float = 2.0) -> RHReport:
    """Partial sums of w^(1+eps) mass over the first K intervals, accumulated in log space."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    comp = saksman_component(m)
    terms = w.log_values * (1 + eps) + np.log(m.masses)
    logs, sums, overflow = [], [], None
    for K in K_list:
        sel = comp <= K
        ls = float(logsumexp(terms[sel])) if np.any(sel) else -math.inf
        logs.append(ls)
        if ls > 700 and overflow is None:
            overflow = int(K)
        sums.append(math.exp(ls) if ls <= 700 else math.inf)
    gap = logs[-1] - logs[0] if len(logs) > 1 else 0.0
    ratio = math.exp(gap) if gap <= 700 else math.inf
    return RHReport(list(K_list), logs, sums, ratio, ratio >= threshold, overflow)


def _lp_norms(G: np.ndarray, w: Weight, p: float) -> np.ndarray:
    return ((np.abs(G) ** p) * (w.values * w.measure.masses)[:, None]).sum(0) ** (1 / p)


def _apply_tag(P: KernelProfile, tag: str, F: np.ndarray) -> np.ndarray:
    m = P.measure
    head, *rest = tag.split(":")
    if head == "Sk":
        return apply_S(P, int(rest[0]), F)
    if head == "N":
        return N_sup(P, F)
    if head == "Teps":
        K = get_kernel(rest[0])
        eps = float(rest[1]) if len(rest) > 1 else float(m.spacing.min())
        return np.column_stack([apply_T_eps(m, K, F[:, j], eps) for j in range(F.shape[1])])
    if head == "Tstar":
        K = get_kernel(rest[0])
        return np.column_stack([apply_T_star(m, K, F[:, j]) for j in range(F.shape[1])])
    raise ValueError(f"unknown operator tag {tag!r}")


def weighted_norm_estimate(P: KernelProfile, op_tag: str, w: Weight, p: float | None = None,
                           trial_functions=None, n_random: int = 20, n_cubes: int = 60,
                           seed: int = 0) -> float:
    """Lower bound max_f ||op f||_{L^p(w)} / ||f||_{L^p(w)} over a trial set.

    The default trial set holds indicators of lattice cubes, sigma chi_Q for the
    same cubes, and random sign vectors. ``op_tag`` is one of ``Sk:<k>``, ``N``,
    ``Teps:<kernel>[:<eps>]`` or ``Tstar:<kernel>``.
    """
    m = P.measure
    p = w.p if p is None else p
    sigma = dual_weight(Weight(m, w.values, p, w.log_values))
    rng = np.random.default_rng(seed)
    if trial_functions is None:
        family = default_cube_family(P, n_random=0, seed=seed)
        pick = rng.choice(len(family), size=min(n_cubes, len(family)), replace=False)
        cols = []
        for j in pick:
            chi = np.zeros(m.size)
            chi[m.cube_indices(family[j].center, family[j].side)] = 1.0
            if chi.any():
                cols += [chi, sigma.values * chi]
        cols += list(rng.choice([-1.0, 1.0], size=(n_random, m.size)))
        F = np.column_stack(cols)
    else:
        F = np.asarray(trial_functions, dtype=float).reshape(m.size, -1)
    G = _apply_tag(P, op_tag, F)
    ww = Weight(m, w.values, p, w.log_values)
    den = _lp_norms(F, ww, p)
    num = _lp_norms(G, ww, p)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0
