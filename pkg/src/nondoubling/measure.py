"""Atomic measures with polynomial growth and fast ball/cube mass queries."""

from __future__ import annotations

import inspect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "DiscreteMeasure",
    "GridFunction",
    "GrowthReport",
    "UniformGrid",
    "ball_mass",
    "cube_mass",
    "verify_growth",
    "generate",
    "lebesgue_interval",
    "lebesgue_square",
    "saksman_intervals",
    "ad_regular_line",
    "log_cluster",
    "atoms",
    "load_measure",
    "dump_measure",
]

MAX_TOTAL_MASS = 1e15


class UniformGrid:
    """Bucket atoms into axis-aligned cells of a fixed size.

    Queries enumerate the cells overlapping the query box and filter
    exactly; when the box covers more cells than there are atoms the scan
    degrades to a vectorised pass over all atoms.
    """

    def __init__(self, points: np.ndarray, cell: float):
        self.points = points
        self.cell = float(cell)
        self.origin = points.min(axis=0)
        keys = np.floor((points - self.origin) / self.cell).astype(np.int64)
        self.buckets: dict[tuple[int, ...], np.ndarray] = {}
        order = np.lexsort(keys.T[::-1])
        sorted_keys = keys[order]
        if len(order):
            breaks = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
            for chunk in np.split(order, breaks):
                self.buckets[tuple(keys[chunk[0]])] = chunk
        self.n_cells = len(self.buckets)

    def candidates(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray | None:
        """Indices of atoms in cells meeting the box [lo, hi]; None means scan all."""
        klo = np.floor((lo - self.origin) / self.cell).astype(np.int64)
        khi = np.floor((hi - self.origin) / self.cell).astype(np.int64)
        span = khi - klo + 1
        if np.prod(span.astype(float)) > max(self.n_cells, 1):
            return None
        ranges = [range(a, b + 1) for a, b in zip(klo, khi)]
        found = []
        for key in _product(ranges):
            chunk = self.buckets.get(key)
            if chunk is not None:
                found.append(chunk)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found)


def _product(ranges):
    if not ranges:
        yield ()
        return
    for head in ranges[0]:
        for tail in _product(ranges[1:]):
            yield (head,) + tail


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite sum of point masses in R^d with a declared growth law mu(B(x,r)) <= c0 r^n.

    ``spacing[i]`` is the distance from atom i to its nearest neighbour and
    ``floor[i] = 2 * spacing[i]`` is the local resolution floor: scale-indexed
    statements about the measure are only meaningful above it.
    """

    points: np.ndarray
    masses: np.ndarray
    n: float
    c0: float
    label: str = "atoms"
    total_mass: float = field(init=False)
    spacing: np.ndarray = field(init=False, repr=False)
    index: UniformGrid = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim == 1:
            pts = pts[:, None]
        ms = np.ascontiguousarray(np.asarray(self.masses, dtype=float).ravel())
        if pts.shape[0] == 0:
            raise ValueError("empty measure")
        if pts.shape[0] != ms.shape[0]:
            raise ValueError("points and masses differ in length")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(ms)):
            raise ValueError("non-finite atom data")
        if np.any(ms <= 0):
            raise ValueError("atom masses must be strictly positive")
        d = pts.shape[1]
        if not (0 < self.n <= d):
            raise ValueError(f"growth exponent n={self.n} must lie in (0, d={d}]")
        if self.c0 <= 0:
            raise ValueError("growth constant must be positive")
        total = math.fsum(ms)
        if total >= MAX_TOTAL_MASS:
            raise ValueError("total mass exceeds the supported range")
        pts.setflags(write=False)
        ms.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)
        object.__setattr__(self, "total_mass", total)

        if len(ms) > 1:
            dist, _ = cKDTree(pts).query(pts, k=2)
            spacing = dist[:, 1]
            if np.any(spacing == 0):
                raise ValueError("duplicate atom locations")
        else:
            spacing = np.zeros(1)
        spacing.setflags(write=False)
        object.__setattr__(self, "spacing", spacing)
        cell = float(np.median(spacing)) if len(ms) > 1 else 1.0
        object.__setattr__(self, "index", UniformGrid(pts, cell))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def floor(self) -> np.ndarray:
        return 2.0 * self.spacing

    @property
    def r_min(self) -> float:
        """Global resolution floor: twice the largest nearest-neighbour spacing."""
        return float(2.0 * self.spacing.max())

    @property
    def diam(self) -> float:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    def ball_indices(self, x, r: float) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.d)
        cand = self.index.candidates(x - r, x + r)
        pts = self.points if cand is None else self.points[cand]
        inside = np.sum((pts - x) ** 2, axis=1) <= r * r
        idx = np.flatnonzero(inside)
        return idx if cand is None else cand[idx]

    def cube_indices(self, center, side: float) -> np.ndarray:
        c = np.asarray(center, dtype=float).reshape(self.d)
        if not np.isfinite(side):
            return np.arange(self.size)
        h = side / 2.0
        cand = self.index.candidates(c - h, c + h)
        pts = self.points if cand is None else self.points[cand]
        inside = np.max(np.abs(pts - c), axis=1) <= h
        idx = np.flatnonzero(inside)
        return idx if cand is None else cand[idx]

    def mass_of(self, idx) -> float:
        return float(math.fsum(self.masses[idx]))

    def restrict(self, keep: np.ndarray, label: str | None = None) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points[keep], self.masses[keep], self.n, self.c0,
                               label or self.label)

    def dilate(self, t: float) -> "DiscreteMeasure":
        """Push forward under x -> t x with masses scaled by t^n, preserving the growth law."""
        return DiscreteMeasure(self.points * t, self.masses * t ** self.n, self.n, self.c0,
                               f"{self.label}*{t:g}")

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "c0": self.c0,
            "atoms": [list(map(float, p)) + [float(m)] for p, m in zip(self.points, self.masses)],
        }

    @classmethod
    def from_json(cls, data: dict, label: str = "json") -> "DiscreteMeasure":
        rows = np.asarray(data["atoms"], dtype=float)
        d = int(data["d"])
        if rows.ndim != 2 or rows.shape[1] != d + 1:
            raise ValueError(f"each atom row must hold {d} coordinates and a mass")
        return cls(rows[:, :d], rows[:, d], float(data["n"]), float(data["c0"]), label)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values attached to the atoms of a measure."""

    measure: DiscreteMeasure
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.measure.size:
            raise ValueError("values must align with the atoms")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def integral(self) -> float:
        return float(np.dot(self.values, self.measure.masses))


def ball_mass(m: DiscreteMeasure, x, r: float) -> float:
    if r < 0:
        raise ValueError("radius must be non-negative")
    return m.mass_of(m.ball_indices(x, r))


def cube_mass(m: DiscreteMeasure, Q) -> float:
    if Q.side < 0:
        raise ValueError("cube side must be non-negative")
    return m.mass_of(m.cube_indices(Q.center, Q.side))


@dataclass
class GrowthReport:
    max_ratio: float
    worst_pair: tuple[int, float]
    c0: float
    tol: float
    passed: bool
    n_pairs: int

    @property
    def normalized_ratio(self) -> float:
        return self.max_ratio / self.c0


def log_grid(lo: float, hi: float, ratio: float = 2 ** 0.25) -> np.ndarray:
    if lo <= 0 or hi < lo:
        raise ValueError(f"bad grid range [{lo}, {hi}]")
    count = int(math.floor(math.log(hi / lo) / math.log(ratio) + 1e-9)) + 1
    return lo * ratio ** np.arange(count)


def verify_growth(m: DiscreteMeasure, samples: int = 200, tol: float = 0.05,
                  r_min: float | None = None, r_max: float | None = None,
                  local: bool = False, seed: int = 0) -> GrowthReport:
    """Scan ball_mass(x, r) / r^n over sampled support points and a log grid of radii.

    With ``local=True`` each centre starts its radius grid at its own
    resolution floor instead of the global one.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    if samples >= m.size:
        centres = np.arange(m.size)
    else:
        centres = np.sort(rng.choice(m.size, size=samples, replace=False))
    hi = r_max if r_max is not None else 4.0 * max(m.diam, m.r_min, 1e-300)
    best, worst, count = -np.inf, (int(centres[0]), float("nan")), 0
    for i in centres:
        lo = r_min if r_min is not None else (m.floor[i] if local else m.r_min)
        if lo <= 0:
            raise ValueError("radius floor is zero; pass r_min explicitly")
        radii = log_grid(lo, max(hi, lo))
        dist = np.sqrt(np.sum((m.points - m.points[i]) ** 2, axis=1))
        order = np.argsort(dist, kind="stable")
        cum = np.cumsum(m.masses[order])
        pos = np.searchsorted(dist[order], radii, side="right")
        mass = np.where(pos > 0, cum[np.maximum(pos - 1, 0)], 0.0)
        ratio = mass / radii ** m.n
        j = int(np.argmax(ratio))
        count += len(radii)
        if ratio[j] > best:
            best, worst = float(ratio[j]), (int(i), float(radii[j]))
    return GrowthReport(best, worst, m.c0, tol, bool(best <= m.c0 * (1 + tol)), count)


# --- generators -----------------------------------------------------------

def _cells(a: float, b: float, res: int) -> tuple[np.ndarray, np.ndarray]:
    h = (b - a) / res
    return a + h * (np.arange(res) + 0.5), np.full(res, h)


def lebesgue_interval(res: int = 1024) -> DiscreteMeasure:
    """Lebesgue measure on [0, 1] as ``res`` equal atoms at cell midpoints."""
    if res < 2:
        raise ValueError("res must be >= 2")
    x, w = _cells(0.0, 1.0, res)
    return DiscreteMeasure(x[:, None], w, 1.0, 2.5, f"lebesgue_interval({res})")


def lebesgue_square(res: int = 50) -> DiscreteMeasure:
    """Planar Lebesgue measure on [0,1]^2 with one-dimensional growth (n = 1)."""
    if res < 2:
        raise ValueError("res must be >= 2")
    x, w = _cells(0.0, 1.0, res)
    gx, gy = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return DiscreteMeasure(pts, np.full(res * res, w[0] ** 2), 1.0, 4.0,
                           f"lebesgue_square({res})")


def saksman_intervals(K: int = 6, res: int = 10) -> DiscreteMeasure:
    """Lebesgue measure on the union of I_k = (1/k - l_k/4, 1/k + l_k/4), l_k = 1/k!, k <= K."""
    if K < 2 or res < 2:
        raise ValueError("need K >= 2 and res >= 2")
    pts, ws = [], []
    prev_lo = math.inf
    for k in range(1, K + 1):
        lk = 1.0 / math.factorial(k)
        lo, hi = 1.0 / k - lk / 4, 1.0 / k + lk / 4
        if hi > prev_lo:
            raise ValueError(f"intervals I_{k - 1} and I_{k} overlap")
        prev_lo = lo
        x, w = _cells(lo, hi, res)
        pts.append(x)
        ws.append(w)
    return DiscreteMeasure(np.concatenate(pts)[:, None], np.concatenate(ws), 1.0, 2.5,
                           f"saksman_intervals({K},{res})")


def saksman_component(m: DiscreteMeasure, K: int | None = None) -> np.ndarray:
    """Interval number k (1-based) of each atom of a saksman_intervals measure."""
    x = m.points[:, 0]
    if np.any(x <= 0):
        raise ValueError("measure is not a saksman_intervals measure")
    top = int(np.rint(1.0 / x.min())) + 1 if K is None else K
    ks = np.arange(1, top + 1)
    half = np.exp(-np.array([math.lgamma(k + 1) for k in ks])) / 4
    inside = np.abs(x[:, None] - 1.0 / ks) <= half * (1 + 1e-9)
    if not np.all(inside.any(axis=1)):
        raise ValueError("measure is not a saksman_intervals measure")
    return ks[np.argmax(inside, axis=1)]


def ad_regular_line(res: int = 512) -> DiscreteMeasure:
    """Length measure on the segment [0,1] x {0} in the plane (n = 1, d = 2)."""
    if res < 2:
        raise ValueError("res must be >= 2")
    x, w = _cells(0.0, 1.0, res)
    pts = np.column_stack([x, np.zeros(res)])
    return DiscreteMeasure(pts, w, 1.0, 2.5, f"ad_regular_line({res})")


def log_cluster(rho: float = 0.97, levels: int = 2200) -> DiscreteMeasure:
    """Lebesgue measure on [-1, 1] discretised on geometric cells accumulating at 0.

    Cell j on each side is [rho^(j+1), rho^j]; its atom sits at the cell
    midpoint and carries the cell length. The central atom carries the mass
    of [-rho^levels, rho^levels]. The resolution near 0 is fine enough for
    lattice ladders with many transit levels.
    """
    if not (0 < rho < 1) or levels < 1:
        raise ValueError("need 0 < rho < 1 and levels >= 1")
    j = np.arange(levels)
    outer, inner = rho ** j, rho ** (j + 1)
    mid, mass = (outer + inner) / 2, outer - inner
    pts = np.concatenate([-mid[::-1], [0.0], mid])
    ms = np.concatenate([mass[::-1], [2 * rho ** levels], mass])
    return DiscreteMeasure(pts[:, None], ms, 1.0, 2.6, f"log_cluster({rho},{levels})")


def atoms(items: Iterable[tuple[Sequence[float] | float, float]], n: float | None = None,
          c0: float = 1.0) -> DiscreteMeasure:
    pts, ms = [], []
    for p, mass in items:
        pts.append(np.atleast_1d(np.asarray(p, dtype=float)))
        ms.append(float(mass))
    if not pts:
        raise ValueError("empty measure")
    pts = np.vstack(pts)
    return DiscreteMeasure(pts, np.asarray(ms), float(pts.shape[1] if n is None else n), c0,
                           "atoms")


GENERATORS = {
    "lebesgue_interval": lebesgue_interval,
    "lebesgue_square": lebesgue_square,
    "saksman_intervals": saksman_intervals,
    "ad_regular_line": ad_regular_line,
    "log_cluster": log_cluster,
    "atoms": atoms,
}


def generate(kind: str, **params) -> DiscreteMeasure:
    try:
        fn = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown generator {kind!r}; choose from {sorted(GENERATORS)}") from None
    allowed = inspect.signature(fn).parameters
    extra = sorted(set(params) - set(allowed))
    if extra:
        raise ValueError(f"{kind} takes {sorted(allowed)}, got unknown {extra}")
    return fn(**params)


def load_measure(path: str | Path) -> DiscreteMeasure:
    with open(path) as fh:
        return DiscreteMeasure.from_json(json.load(fh), label=str(path))


def dump_measure(m: DiscreteMeasure, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(m.to_json(), fh)
