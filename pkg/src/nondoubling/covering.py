"""Whitney decomposition, neighbour layers, and greedy Wiener and Besicovitch selections,
each returned with a certificate of its defining inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cube import Cube

__all__ = [
    "Region",
    "interior_of_box",
    "half_space",
    "open_ball",
    "empty_region",
    "max_overlap",
    "box_covered",
    "WhitneyDecomposition",
    "whitney",
    "whitney_certificate",
    "neighbor_layers",
    "WienerResult",
    "wiener_select",
    "BesicovitchResult",
    "besicovitch_select",
]

_REL = 1e-12


# ----------------------------------------------------------------------------- regions

@dataclass(frozen=True)
class Region:
    """Open set given by a signed distance: positive inside, |value| = distance to the boundary.

    ``cube_distance`` optionally returns the exact distance from a closed cube inside
    the set to its boundary.
    """

    name: str
    signed_distance: Callable[[np.ndarray], float]
    cube_distance: Callable[[Cube], float] | None = None

    def contains(self, x) -> bool:
        return self.signed_distance(np.asarray(x, dtype=float)) > 0


def interior_of_box(lo, hi) -> Region:
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def sd(x):
        return float(np.min(np.minimum(x - lo, hi - x)))

    def cd(Q):
        return float(np.min(np.minimum(Q.lo - lo, hi - Q.hi)))

    return Region("box_interior", sd, cd)


def half_space(normal, offset: float) -> Region:
    """{x : <normal, x> > offset}."""
    nu = np.asarray(normal, dtype=float)
    nu = nu / np.linalg.norm(nu)

    def sd(x):
        return float(nu @ x - offset)

    def cd(Q):
        return float(nu @ Q.center - offset - np.abs(nu).sum() * Q.side / 2)

    return Region("half_space", sd, cd)


def open_ball(center, radius: float) -> Region:
    c = np.asarray(center, dtype=float)

    def sd(x):
        return float(radius - np.linalg.norm(x - c))

    def cd(Q):
        far = np.maximum(np.abs(Q.lo - c), np.abs(Q.hi - c))
        return float(radius - np.linalg.norm(far))

    return Region("ball", sd, cd)


def empty_region() -> Region:
    return Region("empty", lambda x: -math.inf, lambda Q: -math.inf)


# ----------------------------------------------------------------------------- box utilities

def _bounds(cubes) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([Q.lo for Q in cubes])
    hi = np.array([Q.hi for Q in cubes])
    return lo, hi


def max_overlap(lo: np.ndarray, hi: np.ndarray) -> int:
    """Exact max over points of the number of closed boxes [lo_i, hi_i] containing it.

    The maximum is attained at a point whose coordinates are lower bounds of boxes.
    """
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    if len(lo) == 0:
        return 0
    if lo.shape[1] == 1:
        # closed intervals: starts before ends at ties
        events = np.concatenate([np.stack([lo[:, 0], np.zeros(len(lo))], 1),
                                 np.stack([hi[:, 0], np.ones(len(lo))], 1)])
        events = events[np.lexsort((events[:, 1], events[:, 0]))]
        run = np.cumsum(np.where(events[:, 1] == 0, 1, -1))
        return int(run.max())
    best = 0
    for x in np.unique(lo[:, 0]):
        act = (lo[:, 0] <= x) & (x <= hi[:, 0])
        if act.sum() > best:
            best = max(best, max_overlap(lo[act, 1:], hi[act, 1:]))
    return best


def box_covered(lo: np.ndarray, hi: np.ndarray, cov_lo: np.ndarray, cov_hi: np.ndarray) -> bool:
    """Whether the closed box [lo, hi] lies in the union of closed boxes, by compressing
    coordinates and testing the midpoint of every cell."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if len(cov_lo) == 0:
        return False
    cov_lo, cov_hi = np.atleast_2d(cov_lo), np.atleast_2d(cov_hi)
    meet = np.all((cov_lo <= hi) & (cov_hi >= lo), axis=1)
    cov_lo, cov_hi = cov_lo[meet], cov_hi[meet]
    if len(cov_lo) == 0:
        return False
    axes = []
    for k in range(len(lo)):
        if hi[k] == lo[k]:
            axes.append(np.array([lo[k]]))
            continue
        cuts = np.concatenate([[lo[k], hi[k]], cov_lo[:, k], cov_hi[:, k]])
        cuts = np.unique(np.clip(cuts, lo[k], hi[k]))
        axes.append((cuts[:-1] + cuts[1:]) / 2)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))
    for s in range(0, len(grid), 4096):
        pts = grid[s:s + 4096]
        inside = np.all((pts[:, None, :] >= cov_lo[None]) & (pts[:, None, :] <= cov_hi[None]), -1)
        if not np.all(inside.any(axis=1)):
            return False
    return True


# ----------------------------------------------------------------------------- Whitney

@dataclass
class WhitneyDecomposition:
    region: Region
    root: Cube
    cubes: list[Cube]
    depths: list[int]
    incomplete: list[Cube] = field(default_factory=list)
    c1: float = 1.0
    c2: float = 0.0

    def __len__(self) -> int:
        return len(self.cubes)


def whitney(region: Region, root: Cube, max_depth: int = 12) -> WhitneyDecomposition:
    """Dyadic refinement of ``root``: keep Q once 10 diam(Q) <= dist(centre, boundary), the
    parent having failed; cubes left at ``max_depth`` inside the set are flagged incomplete."""
    if root.is_whole or root.is_point:
        raise ValueError("root must be a bounded cube of positive side")
    d = root.d
    kept, depths, incomplete = [], [], []
    stack = [(root, 0)]
    offsets = np.array(list(np.ndindex(*([2] * d)))) - 0.5
    while stack:
        Q, depth = stack.pop()
        diam = Q.side * math.sqrt(d)
        sd = region.signed_distance(Q.center)
        if sd <= -diam / 2:
            continue  # Q misses the set
        if sd >= 10 * diam:
            kept.append(Q)
            depths.append(depth)
            continue
        if depth == max_depth:
            if sd > 0:
                incomplete.append(Q)
            continue
        half = Q.side / 2
        for off in offsets[::-1]:
            stack.append((Cube(Q.center + off * half, half), depth + 1))
    order = np.lexsort(np.array([Q.center for Q in kept]).T[::-1]) if kept else []
    cubes = [kept[i] for i in order]
    depths = [depths[i] for i in order]
    return WhitneyDecomposition(region, root, cubes, depths, incomplete, 1.0, 40 * math.sqrt(d))


def whitney_certificate(W: WhitneyDecomposition) -> dict:
    """Evaluate every Whitney inequality over all cubes.

    Returns the count of violations per property, the max overlap of the 4Q_i and
    its dimensional bound 10^d.
    """
    d = W.root.d
    out = {"cubes": len(W.cubes), "incomplete": len(W.incomplete)}
    if not W.cubes:
        out.update(ten_q_violations=0, window_violations=0, overlap_4q=0,
                   overlap_bound=10 ** d, disjoint_violations=0, passed=True)
        return out
    ten_bad = window_bad = 0
    for Q, depth in zip(W.cubes, W.depths):
        diam = Q.side * math.sqrt(d)
        # 10Q inside the set: its farthest point is 5 diam from the centre
        if W.region.signed_distance(Q.center) < 5 * diam * (1 - _REL):
            ten_bad += 1
        if W.region.cube_distance is not None:
            lo_d = hi_d = W.region.cube_distance(Q)
        else:
            sd = W.region.signed_distance(Q.center)
            lo_d, hi_d = sd - diam / 2, sd
        upper_ok = depth == 0 or hi_d <= W.c2 * Q.side * (1 + _REL)
        if lo_d < W.c1 * Q.side * (1 - _REL) or not upper_ok:
            window_bad += 1
    lo, hi = _bounds(W.cubes)
    # dyadic cubes of one tree: interiors are disjoint iff no open overlap
    mid_lo, mid_hi = lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo)
    disjoint_bad = max_overlap(mid_lo, mid_hi) - 1
    sides = hi - lo
    overlap = max_overlap(lo - 1.5 * sides, hi + 1.5 * sides)
    out.update(ten_q_violations=ten_bad, window_violations=window_bad,
               disjoint_violations=max(disjoint_bad, 0), overlap_4q=overlap,
               overlap_bound=10 ** d)
    out["passed"] = (ten_bad == 0 and window_bad == 0 and disjoint_bad <= 0
                     and overlap <= 10 ** d)
    return out


def _touching(lo, hi, lo_i, hi_i) -> np.ndarray:
    return np.all((lo <= hi_i * (1 + _REL) + _REL) & (hi >= lo_i - _REL - np.abs(lo_i) * _REL), axis=1)


def neighbor_layers(W: WhitneyDecomposition, i: int, m: int) -> tuple[Cube, set[int]]:
    """U_m(Q_i) as (2Q_i, indices): layer 1 holds the cubes meeting 3Q_i and each further
    layer adds the cubes touching the previous ones."""
    if m < 1:
        raise ValueError("m must be >= 1")
    lo, hi = _bounds(W.cubes)
    Q = W.cubes[i]
    members = set(np.flatnonzero(_touching(lo, hi, Q.scaled(3).lo, Q.scaled(3).hi)).tolist())
    for _ in range(m - 1):
        grow = set(members)
        for j in members:
            grow.update(np.flatnonzero(_touching(lo, hi, lo[j], hi[j])).tolist())
        if grow == members:
            break
        members = grow
    return Q.scaled(2), members


# ----------------------------------------------------------------------------- Wiener

@dataclass
class WienerResult:
    selected: list[int]
    certificate: dict


def wiener_select(cubes: list[Cube], A=None) -> WienerResult:
    """Greedy selection: repeatedly take the largest cube whose 4Q is not inside the union
    of the 20Q_j already taken. Certifies (1) A in union of 20Q_j, (2) the 2Q_j disjoint,
    (3) 2Q_j meeting 2Q_k with k unselected forces side(Q_k) <= 10 side(Q_j)."""
    if not cubes:
        return WienerResult([], {"passed": True, "selected": 0})
    if any(Q.is_whole for Q in cubes):
        j = next(i for i, Q in enumerate(cubes) if Q.is_whole)
        return WienerResult([j], {"passed": True, "selected": 1, "trivial": True})
    d = cubes[0].d
    sides = np.array([Q.side for Q in cubes])
    centers = np.array([Q.center for Q in cubes])
    order = np.argsort(-sides, kind="stable")
    sel: list[int] = []
    big_lo = np.empty((0, d))
    big_hi = np.empty((0, d))
    for i in order:
        Q = cubes[i]
        if box_covered(Q.center - 2 * Q.side, Q.center + 2 * Q.side, big_lo, big_hi):
            continue
        sel.append(int(i))
        big_lo = np.vstack([big_lo, Q.center - 10 * Q.side])
        big_hi = np.vstack([big_hi, Q.center + 10 * Q.side])
    return WienerResult(sel, _wiener_certificate(cubes, sel, centers, sides, A))


def _wiener_certificate(cubes, sel, centers, sides, A) -> dict:
    sel_arr = np.array(sel)
    cs, ss = centers[sel_arr], sides[sel_arr]
    gap = np.max(np.abs(cs[:, None, :] - cs[None, :, :]), axis=-1)
    reach = ss[:, None] + ss[None, :]
    np.fill_diagonal(gap, np.inf)
    margin = float(np.min(gap - reach)) if len(sel) > 1 else math.inf
    disjoint_bad = int(np.sum(np.triu(gap <= reach, 1)))

    unsel = np.setdiff1d(np.arange(len(cubes)), sel_arr)
    size_bad, worst = 0, 0.0
    if len(unsel):
        g = np.max(np.abs(centers[unsel][:, None, :] - cs[None, :, :]), axis=-1)
        meet = g <= sides[unsel][:, None] + ss[None, :]
        ratio = np.where(meet, sides[unsel][:, None] / ss[None, :], 0.0)
        worst = float(ratio.max()) if ratio.size else 0.0
        size_bad = int(np.sum(ratio > 10 * (1 + _REL)))

    cover_bad = 0
    if A is not None:
        pts = np.atleast_2d(np.asarray(A, dtype=float))
        if pts.shape[0] and pts.shape[1] != centers.shape[1]:
            pts = pts.T
        t = np.max(np.abs(pts[:, None, :] - cs[None, :, :]), axis=-1)
        cover_bad = int(np.sum(~np.any(t <= 10 * ss[None, :] * (1 + _REL), axis=1)))
    return {
        "selected": len(sel), "cover_violations": cover_bad,
        "disjoint_violations": disjoint_bad, "disjoint_margin": margin,
        "size_violations": size_bad, "max_side_ratio": worst,
        "passed": cover_bad == 0 and disjoint_bad == 0 and size_bad == 0,
    }


# ----------------------------------------------------------------------------- Besicovitch

@dataclass
class BesicovitchResult:
    selected: list[int]
    chooser: np.ndarray
    certificate: dict


def besicovitch_select(A, Q_of) -> BesicovitchResult:
    """Cover A by cubes R_x = Q_y (y in A, x in Q_y/2, side maximal), chosen greedily.

    ``Q_of`` is a sequence of cubes (``Q_of[i]`` centred at ``A[i]``) or a callable
    point -> cube. Returns indices y of the selected cubes Q_y; the certificate holds
    the cover check, the overlap count and the factor-4 property.
    """
    pts = np.atleast_2d(np.asarray(A, dtype=float))
    n = len(pts)
    cubes = [Q_of(p) for p in pts] if callable(Q_of) else list(Q_of)
    if len(cubes) != n:
        raise ValueError("one cube per point of A")
    sides = np.array([Q.side for Q in cubes])
    for p, Q in zip(pts, cubes):
        if not np.allclose(Q.center, p):
            raise ValueError("each cube must be centred at its point")
    gap = np.max(np.abs(pts[:, None, :] - pts[None, :, :]), axis=-1)
    # x in Q_y / 2  <=>  |x - y|_inf <= side_y / 4
    ok = gap <= sides[None, :] / 4 * (1 + _REL)
    chooser = np.argmax(np.where(ok, sides[None, :], -np.inf), axis=1)
    r_side = sides[chooser]

    # centred surrogate B_x = cube(x, side(R_x)/2) lies inside R_x
    order = np.lexsort((np.arange(n), -r_side))
    covered = np.zeros(n, dtype=bool)
    picked: list[int] = []
    for x in order:
        if covered[x]:
            continue
        picked.append(int(x))
        covered |= np.max(np.abs(pts - pts[x]), axis=1) <= r_side[x] / 4 * (1 + _REL)
    selected = sorted(set(int(chooser[x]) for x in picked))
    return BesicovitchResult(selected, chooser, _besicovitch_certificate(pts, cubes, sides, selected))


def _besicovitch_certificate(pts, cubes, sides, selected) -> dict:
    sel = np.array(selected)
    cs = pts[sel]
    ss = sides[sel]
    t = np.max(np.abs(pts[:, None, :] - cs[None, :, :]), axis=-1)
    inside = t <= ss[None, :] / 2 * (1 + _REL)
    cover_bad = int(np.sum(~inside.any(axis=1)))
    ratio = np.where(inside, sides[:, None] / np.where(ss > 0, ss, np.inf)[None, :], 0.0)
    worst = float(ratio.max()) if ratio.size else 0.0
    factor_bad = int(np.sum(ratio > 4 * (1 + _REL)))
    lo, hi = _bounds([cubes[i] for i in selected])
    overlap = max_overlap(lo, hi)
    return {
        "selected": len(selected), "cover_violations": cover_bad,
        "factor4_violations": factor_bad, "max_side_ratio": worst, "overlap": overlap,
        "passed": cover_bad == 0 and factor_bad == 0,
    }
