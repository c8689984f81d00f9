"""Per-atom ladders of cubes Q_{x,k} whose cube distances grow by A per scale."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cube import Cube, PropertyReport
from .measure import DiscreteMeasure

__all__ = [
    "Lattice",
    "INITIAL",
    "TRANSIT",
    "STOPPING",
    "ABOVE_ALL",
    "BELOW_ALL",
    "build_lattice",
    "ad_class",
    "lipschitz_sides",
    "check_increments",
    "check_lattice",
]

INITIAL, TRANSIT, STOPPING = "INITIAL", "TRANSIT", "STOPPING"
ABOVE_ALL, BELOW_ALL = "ABOVE_ALL", "BELOW_ALL"

SCALE_CAP = 100.0


def default_a_min(m: DiscreteMeasure) -> float:
    return m.c0 * 2 ** m.n


@dataclass(frozen=True, eq=False)
class Lattice:
    """Ladders k -> Q_{x,k} for every atom x.

    ``sides[i, j]`` is the side of Q_{x_i, k_min + j}; column 0 holds the
    initial cube (the smallest cube centred at x_i containing every atom) and
    stopping levels hold 0. ``last_transit[i]`` is K_x: Q_{x,k} is a transit
    cube for k_min < k <= K_x and the point {x} for k > K_x. For kernels the
    initial cube plays the role of the whole space.
    """

    measure: DiscreteMeasure
    A: float
    sides: np.ndarray
    last_transit: np.ndarray
    increments: np.ndarray
    eps_tol: float
    k_min: int = 0
    lipschitz: bool = False
    base_sides: np.ndarray | None = field(default=None, repr=False)

    @property
    def k_max(self) -> int:
        """Last level at which some kernel s_k is not identically zero."""
        return int(self.last_transit.max()) + 1

    @property
    def levels(self) -> range:
        return range(self.k_min + 1, self.k_max + 1)

    @property
    def epsilon_observed(self) -> float:
        inc = self.increments[:, 1:]
        ok = np.isfinite(inc)
        return float(np.max(np.abs(inc[ok] - self.A))) if np.any(ok) else 0.0

    def n_transit(self) -> int:
        return int(np.sum(self.last_transit - self.k_min))

    def side(self, i, k: int) -> np.ndarray | float:
        """Side of Q_{x_i,k}; inf below the initial level, 0 past stopping."""
        j = k - self.k_min
        if j < 0:
            return np.full(np.shape(i), np.inf) if np.ndim(i) else math.inf
        if j >= self.sides.shape[1]:
            return np.zeros(np.shape(i)) if np.ndim(i) else 0.0
        return self.sides[i, j]

    def kernel_side(self, i, k: int):
        """Side used by the kernels: the initial cube counts as the whole space."""
        s = self.side(i, k)
        if k <= self.k_min:
            return np.full(np.shape(s), np.inf) if np.ndim(s) else math.inf
        return s

    def classify(self, i: int, k: int) -> str:
        if k <= self.k_min:
            return INITIAL
        return TRANSIT if k <= self.last_transit[i] else STOPPING

    def cube(self, i: int, k: int, whole_initial: bool = True) -> Cube:
        s = self.kernel_side(i, k) if whole_initial else self.side(i, k)
        return Cube(self.measure.points[i], s)

    def stopping_set(self, k: int) -> np.ndarray:
        """Indices of atoms whose Q_{x,k} is a stopping point."""
        return np.flatnonzero(self.last_transit < k)

    def side_at(self, pts: np.ndarray, k: int) -> np.ndarray:
        """Lipschitz side psi_k at arbitrary points (requires a Lipschitz lattice)."""
        if not self.lipschitz:
            raise ValueError("side_at needs a lattice built with lipschitz=True")
        if k <= self.k_min:
            return np.full(len(pts), np.inf)
        base = self.base_sides
        j = k - self.k_min
        col = base[:, j] if j < base.shape[1] else np.zeros(base.shape[0])
        return _sup_convolution(self.measure.points, col, np.atleast_2d(pts))

    def floor_at(self, pts: np.ndarray) -> np.ndarray:
        """1-Lipschitz extension of the per-atom resolution floor."""
        m = self.measure
        out = np.empty(len(pts))
        for s in range(0, len(pts), 256):
            block = pts[s:s + 256]
            dist = np.sqrt(((block[:, None, :] - m.points[None, :, :]) ** 2).sum(-1))
            out[s:s + 256] = np.min(m.floor[None, :] + dist, axis=1)
        return out

    def core_floor(self) -> np.ndarray:
        """Radius below which kernels are capped at every atom."""
        if self.lipschitz:
            return self.floor_at(self.measure.points) / 2
        return self.measure.floor / 2

    def perturbed(self, factor: float = 0.1, seed: int = 0) -> "Lattice":
        """Copy with transit sides multiplied by random factors in [1-factor, 1+factor]."""
        rng = np.random.default_rng(seed)
        sides = self.sides.copy()
        mask = np.zeros_like(sides, dtype=bool)
        for i, K in enumerate(self.last_transit):
            mask[i, 1:K - self.k_min + 1] = True
        sides[mask] *= 1 + factor * rng.choice([-1.0, 1.0], size=mask.sum())
        incs = _recompute_increments(self.measure, sides, self.last_transit - self.k_min)
        return replace(self, sides=sides, increments=incs)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "A": self.A,
            "k_min": self.k_min,
            "eps_tol": self.eps_tol,
            "lipschitz": self.lipschitz,
            "last_transit": [int(v) for v in self.last_transit],
            "sides": [[float(v) for v in row[:K - self.k_min + 1]]
                      for row, K in zip(self.sides, self.last_transit)],
        }

    @classmethod
    def from_json(cls, m: DiscreteMeasure, data: dict) -> "Lattice":
        k_min = int(data["k_min"])
        last = np.asarray(data["last_transit"], dtype=int)
        width = int(last.max()) - k_min + 2
        sides = np.zeros((m.size, width))
        for i, row in enumerate(data["sides"]):
            sides[i, :len(row)] = row
        incs = _recompute_increments(m, sides, last - k_min)
        lat = cls(m, float(data["A"]), sides, last, incs, float(data["eps_tol"]), k_min)
        return lipschitz_lattice(lat) if data.get("lipschitz") else lat


def _sup_convolution(points: np.ndarray, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """max_z (values[z] - |x - z|) for each x in pts, clipped at 0."""
    live = values > 0
    if not np.any(live):
        return np.zeros(len(pts))
    src, val = points[live], values[live]
    out = np.empty(len(pts))
    for s in range(0, len(pts), 256):
        block = pts[s:s + 256]
        dist = np.sqrt(((block[:, None, :] - src[None, :, :]) ** 2).sum(-1))
        out[s:s + 256] = np.max(val[None, :] - dist, axis=1)
    return np.maximum(out, 0.0)


def _ladder(m: DiscreteMeasure, i: int, A: float, eps_tol: float, k_span: int):
    x = m.points[i]
    t = np.max(np.abs(m.points - x), axis=1)
    r = np.sqrt(np.sum((m.points - x) ** 2, axis=1))
    others = np.flatnonzero(r > 0)
    t, w = t[others], m.masses[others] / r[others] ** m.n
    order = np.argsort(t, kind="stable")
    t, w = t[order], w[order]
    cum = np.concatenate([[0.0], np.cumsum(w)])

    def weight_inside(side):
        return cum[np.searchsorted(t, side / 2, side="right")]

    init = 2 * float(t[-1]) if len(t) else 0.0
    sides, incs = [init], [math.nan]
    floor = float(m.floor[i])
    L = init
    while len(sides) <= k_span and L > 0:
        total = weight_inside(L)
        if total - weight_inside(floor) < A - eps_tol or floor > L / SCALE_CAP:
            break
        target = total - A
        j = int(np.searchsorted(cum, target, side="left"))
        # side 2 t[j-1] keeps atom j-1 inside; 2 t[j-2] leaves it out
        options = []
        for jj in (j, j - 1):
            side = 2 * t[jj - 1] if jj >= 1 else floor
            options.append(side)
        side = min(options, key=lambda s: abs(total - weight_inside(s) - A))
        side = min(max(side, floor), L / SCALE_CAP)
        sides.append(side)
        incs.append(total - weight_inside(side))
        L = side
    return sides, incs


def _recompute_increments(m: DiscreteMeasure, sides: np.ndarray, n_transit: np.ndarray):
    from .cube import delta_from

    incs = np.full(sides.shape, np.nan)
    for i in range(m.size):
        for j in range(1, int(n_transit[i]) + 1):
            incs[i, j] = delta_from(m, m.points[i], sides[i, j], sides[i, j - 1])
    return incs


def build_lattice(m: DiscreteMeasure, A: float = 40.0, k_span: int = 64,
                  eps_frac: float = 0.05, a_min: float | None = None,
                  lipschitz: bool = False) -> Lattice:
    """Build the ladders: each new side is the cube whose delta to its parent is closest to A
    from the atom breakpoints, capped at parent/100 and floored at the local resolution.

    A ladder stops once no admissible side reaches delta >= A - eps_tol.
    """
    if m.size == 0:
        raise ValueError("empty measure")
    a_min = default_a_min(m) if a_min is None else a_min
    if A < a_min:
        raise ValueError(f"A={A} is below A_min={a_min:g}")
    eps_tol = eps_frac * A
    ladders = [_ladder(m, i, A, eps_tol, k_span) for i in range(m.size)]
    width = max(len(s) for s, _ in ladders) + 1
    sides = np.zeros((m.size, width))
    incs = np.full((m.size, width), np.nan)
    last = np.empty(m.size, dtype=int)
    for i, (s, inc) in enumerate(ladders):
        sides[i, :len(s)] = s
        incs[i, :len(inc)] = inc
        last[i] = len(s) - 1
    lat = Lattice(m, float(A), sides, last, incs, eps_tol)
    return lipschitz_lattice(lat) if lipschitz else lat


def lipschitz_sides(L: Lattice, k: int, pts: np.ndarray | None = None) -> np.ndarray:
    """psi_k(x) = max over atoms z of (side(Q_{z,k}) - |x - z|), at atoms or given points."""
    base = L.base_sides if L.base_sides is not None else L.sides
    m = L.measure
    pts = m.points if pts is None else np.atleast_2d(pts)
    j = k - L.k_min
    if j < 0:
        return np.full(len(pts), np.inf)
    col = base[:, j] if j < base.shape[1] else np.zeros(m.size)
    return _sup_convolution(m.points, col, pts)


def lipschitz_lattice(L: Lattice) -> Lattice:
    """Lattice whose transit sides are replaced by their Lipschitz regularisation."""
    if L.lipschitz:
        return L
    base = L.sides
    sides = base.copy()
    for j in range(1, base.shape[1]):
        sides[:, j] = lipschitz_sides(L, L.k_min + j)
    n_transit = np.array([np.max(np.flatnonzero(row > 0)) for row in sides])
    last = L.k_min + n_transit
    width = int(n_transit.max()) + 2
    if width > sides.shape[1]:
        sides = np.pad(sides, ((0, 0), (0, width - sides.shape[1])))
        base = np.pad(base, ((0, 0), (0, width - base.shape[1])))
    incs = _recompute_increments(L.measure, sides, n_transit)
    return replace(L, sides=sides, last_transit=last, increments=incs,
                   lipschitz=True, base_sides=base)


def ad_class(L: Lattice, Q: Cube):
    """Scale k with Q approximately in D_k, or ABOVE_ALL / BELOW_ALL."""
    m = L.measure
    if Q.is_whole:
        return ABOVE_ALL
    reach = np.max(np.abs(m.points - Q.center), axis=1) + Q.side / 2
    best_side, best_k = math.inf, None
    candidates = []
    for j in range(L.sides.shape[1]):
        col = L.sides[:, j]
        ok = (col > 0) & (reach <= col / 2 * (1 + 1e-12))
        if j > 0:
            ok &= j <= (L.last_transit - L.k_min)
        if np.any(ok):
            s = float(col[ok].min())
            candidates.append((s, L.k_min + j))
            if s < best_side:
                best_side, best_k = s, L.k_min + j
    if Q.side == 0:
        hit = np.flatnonzero(np.all(m.points == Q.center, axis=1))
        if len(hit):
            return BELOW_ALL
    if best_k is None:
        return ABOVE_ALL
    witnesses = [k for s, k in candidates if s <= best_side * 100 / 99]
    return max(witnesses)


def check_increments(L: Lattice) -> PropertyReport:
    """|delta(Q_{x,k}, Q_{x,k-1}) - A| <= eps_tol for every transit cube (the initial
    parent counts as the whole space)."""
    inc = L.increments[:, 1:]
    ok = np.isfinite(inc)
    devs = np.abs(inc[ok] - L.A)
    worst = float(devs.max()) if devs.size else 0.0
    stats = {"transit_pairs": int(ok.sum()), "max_increment_deviation": worst,
             "eps_tol": L.eps_tol}
    wit = {}
    if worst > L.eps_tol:
        ii, jj = np.argwhere(ok)[np.argmax(devs)]
        wit["increment"] = (int(ii), L.k_min + 1 + int(jj), float(inc[ii, jj]))
    return PropertyReport("transit_increments", worst <= L.eps_tol, stats, wit)


def check_lattice(L: Lattice, pairs: int = 200, seed: int = 0) -> PropertyReport:
    """Nesting, transit increments, separation (e), decay (f) and stopping monotonicity."""
    m = L.measure
    rng = np.random.default_rng(seed)
    n_trans = L.last_transit - L.k_min
    stats, wit = {}, {}

    nest_bad = 0
    for i in range(m.size):
        row = L.sides[i, :n_trans[i] + 1]
        if np.any(np.diff(row) > 0) or np.any(L.sides[i, n_trans[i] + 1:] != 0):
            nest_bad += 1
            wit.setdefault("nesting", i)
    stats["nesting_violations"] = nest_bad

    inc_report = check_increments(L)
    stats.update(inc_report.stats)
    wit.update(inc_report.witnesses)

    sep_bad, sep_tested = 0, 0
    eta_obs = math.inf
    levels = list(range(L.k_min + 1, L.k_max + 1))
    per_level = max(1, pairs // max(1, len(levels)))
    for k in levels:
        xs = rng.choice(m.size, size=min(per_level, m.size), replace=False)
        half_k = L.side(np.arange(m.size), k)
        for i in xs:
            si = L.side(i, k)
            gap = np.max(np.abs(m.points - m.points[i]), axis=1)
            touching = np.flatnonzero(gap <= si + half_k)
            for y in touching:
                sep_tested += 1
                parent = L.kernel_side(y, k - 1)
                inside = gap[y] + si <= parent / 2 * (1 + 1e-12)
                if not inside or si > parent / SCALE_CAP * (1 + 1e-12):
                    sep_bad += 1
                    wit.setdefault("separation", (int(i), int(y), k))
            for mstep in range(1, L.k_max - k + 1):
                deep = L.side(np.arange(m.size), k + mstep)
                hit = np.flatnonzero((gap <= si + deep) & (deep > 0))
                if len(hit) and si > 0:
                    worst = float(deep[hit].max())
                    eta = math.log2(si / worst) / (L.A * mstep)
                    eta_obs = min(eta_obs, eta)
    stats["separation_pairs"] = sep_tested
    stats["separation_violations"] = sep_bad
    stats["eta_observed"] = eta_obs

    mono_bad = 0
    for i in range(m.size):
        for k in range(L.k_min + 1, L.k_max + 2):
            if L.classify(i, k) == STOPPING and L.classify(i, k + 1) != STOPPING:
                mono_bad += 1
    stats["stopping_monotone_violations"] = mono_bad

    passed = (nest_bad == 0 and sep_bad == 0 and mono_bad == 0
              and stats["max_increment_deviation"] <= L.eps_tol and eta_obs > 0)
    return PropertyReport("lattice_invariants", passed, stats, wit)
