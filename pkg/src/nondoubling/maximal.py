"""Maximal operators on atomic measures: N (two forms), its truncations, M_lambda, M_R."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cube import Cube, is_doubling
from .kernels import KernelProfile, apply_S
from .lattice import ad_class
from .measure import DiscreteMeasure, log_grid

__all__ = [
    "PhiParams",
    "phi",
    "default_radii",
    "N_phi",
    "N_sup",
    "N_trunc",
    "M_lambda",
    "M_radial",
    "fractional_integral",
    "SmallMeanResult",
    "find_small_mean_doubling",
]

GRID_RATIO = 2 ** 0.25


@dataclass(frozen=True)
class PhiParams:
    x: np.ndarray
    r: float
    R: float

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise ValueError("need 0 < r < R")


def phi(p: PhiParams, y: np.ndarray, n: float) -> np.ndarray:
    """1/r^n on the closed r-ball, 1/|x-y|^n out to R, zero beyond."""
    t = np.sqrt(((np.atleast_2d(y) - p.x) ** 2).sum(-1))
    out = np.zeros(len(t))
    out[t <= p.r] = p.r ** -n
    mid = (t > p.r) & (t <= p.R)
    out[mid] = t[mid] ** -n
    return out


def default_radii(m: DiscreteMeasure, i: int) -> np.ndarray:
    """Log grid with ratio 2^(1/4) from the atom's resolution floor to 4 diam."""
    lo = float(m.floor[i])
    if lo <= 0:
        raise ValueError("single-atom measure has no resolution floor; pass radii")
    return log_grid(lo, 4 * max(m.diam, lo), GRID_RATIO)


def _as_matrix(m: DiscreteMeasure, f) -> tuple[np.ndarray, bool]:
    f = np.abs(np.asarray(f, dtype=float))
    if f.shape[0] != m.size or f.ndim not in (1, 2):
        raise ValueError("f must have one value (or row) per atom")
    return (f[:, None], True) if f.ndim == 1 else (f, False)


def _sorted_from(m: DiscreteMeasure, i: int):
    t = np.sqrt(((m.points - m.points[i]) ** 2).sum(-1))
    order = np.argsort(t, kind="stable")
    return order, t[order]


def N_phi(m: DiscreteMeasure, f, radii=None, idx=None) -> np.ndarray:
    """max over radius pairs r < R of int phi_{x,r,R}|f| / (1 + ||phi_{x,r,R}||_1).

    ``radii`` fixes a common grid; by default each atom uses :func:`default_radii`.
    ``f`` may be (atoms,) or (atoms, functions).
    """
    F, flat = _as_matrix(m, f)
    idx = np.arange(m.size) if idx is None else np.asarray(idx)
    out = np.zeros((len(idx), F.shape[1]))
    for row, i in enumerate(idx):
        order, t = _sorted_from(m, i)
        grid = np.asarray(radii, dtype=float) if radii is not None else default_radii(m, i)
        if len(grid) < 2:
            continue
        w = m.masses[order]
        inv = np.zeros_like(t)
        inv[t > 0] = t[t > 0] ** -m.n
        V = F[order] * w[:, None]
        near = np.vstack([np.zeros((1, V.shape[1])), np.cumsum(V, axis=0)])
        far = np.vstack([np.zeros((1, V.shape[1])), np.cumsum(V * inv[:, None], axis=0)])
        mass_near = np.concatenate([[0.0], np.cumsum(w)])
        mass_far = np.concatenate([[0.0], np.cumsum(w * inv)])
        pos = np.searchsorted(t, grid, side="right")
        scale = grid ** -m.n
        r_i, R_i = np.triu_indices(len(grid), k=1)
        num = (near[pos[r_i]] * scale[r_i, None]
               + far[pos[R_i]] - far[pos[r_i]])
        norm = mass_near[pos[r_i]] * scale[r_i] + mass_far[pos[R_i]] - mass_far[pos[r_i]]
        out[row] = np.max(num / (1 + norm)[:, None], axis=0)
    return out[:, 0] if flat else out


def N_sup(P: KernelProfile, f) -> np.ndarray:
    """Pointwise max over lattice scales of S_k|f|."""
    return N_trunc(P, f, P.lattice.k_min)


def N_trunc(P: KernelProfile, f, h: int) -> np.ndarray:
    """max over k >= h of S_k|f|; h is clipped to the lattice range."""
    L = P.lattice
    g = np.abs(np.asarray(f, dtype=float))
    out = np.zeros(g.shape)
    lo = min(max(h, L.k_min + 1), L.k_max)
    for k in range(lo, L.k_max + 1):
        np.maximum(out, apply_S(P, k, g), out=out)
    return out


def M_lambda(m: DiscreteMeasure, f, lam: float = 1.0, radii=None) -> np.ndarray:
    """max over r of int_{B(x,r)} |f| / mu(B(x, lam r)), centred at each atom."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    F, flat = _as_matrix(m, f)
    out = np.zeros(F.shape)
    for i in range(m.size):
        order, t = _sorted_from(m, i)
        grid = np.asarray(radii, dtype=float) if radii is not None else default_radii(m, i)
        w = m.masses[order]
        near = np.vstack([np.zeros((1, F.shape[1])), np.cumsum(F[order] * w[:, None], axis=0)])
        mass = np.concatenate([[0.0], np.cumsum(w)])
        num = near[np.searchsorted(t, grid, side="right")]
        den = mass[np.searchsorted(t, lam * grid, side="right")]
        out[i] = np.max(num / den[:, None], axis=0)
    return out[:, 0] if flat else out


def M_radial(m: DiscreteMeasure, f, radii=None, centered: bool = False) -> np.ndarray:
    """max over balls B(c, r) containing x of r^-n int_B |f|, centres at atoms.

    With ``centered`` only balls centred at x count.
    """
    F, flat = _as_matrix(m, f)
    out = np.zeros(F.shape)
    for c in range(m.size):
        order, t = _sorted_from(m, c)
        grid = np.asarray(radii, dtype=float) if radii is not None else default_radii(m, c)
        w = m.masses[order]
        near = np.vstack([np.zeros((1, F.shape[1])), np.cumsum(F[order] * w[:, None], axis=0)])
        vals = near[np.searchsorted(t, grid, side="right")] * (grid ** -m.n)[:, None]
        if centered:
            np.maximum(out[c], vals.max(axis=0), out=out[c])
            continue
        # atom at distance t lies in every ball of radius >= t
        suffix = np.maximum.accumulate(vals[::-1], axis=0)[::-1]
        first = np.searchsorted(grid, t, side="left")
        inside = first < len(grid)
        tgt = order[inside]
        out[tgt] = np.maximum(out[tgt], suffix[first[inside]])
    return out[:, 0] if flat else out


def fractional_integral(m: DiscreteMeasure, f, core=None) -> np.ndarray:
    """sum_y f(y) mass(y) / max(|x-y|, core_x)^n.

    ``core`` (per atom) regularises the diagonal; without it the y = x term is dropped.
    """
    F, flat = _as_matrix(m, f)
    F = np.asarray(f, dtype=float).reshape(m.size, -1)
    out = np.zeros(F.shape)
    for s in range(0, m.size, 512):
        rows = np.arange(s, min(s + 512, m.size))
        t = np.sqrt(((m.points[rows, None, :] - m.points[None, :, :]) ** 2).sum(-1))
        if core is not None:
            t = np.maximum(t, np.asarray(core)[rows, None])
        with np.errstate(divide="ignore"):
            kern = np.where(t > 0, 1.0 / np.where(t > 0, t, 1.0) ** m.n, 0.0)
        out[rows] = kern @ (F * m.masses[:, None])
    return out[:, 0] if flat else out


@dataclass
class SmallMeanResult:
    found: bool
    cube: Cube | None
    mean: float
    s_value: float
    best_ratio: float
    scanned: int


def find_small_mean_doubling(P: KernelProfile, i: int, k: int, f, alpha: float = 2.0,
                             beta: float | None = None, c6: float = 50.0,
                             ratio: float = 2 ** 0.125) -> SmallMeanResult:
    """Scan cubes centred at x_i whose scale class is k or k-1, from large to small, for the
    first (alpha, beta)-doubling Q with mean of |f| over alpha Q at most c6 S_k|f|(x_i)."""
    L = P.lattice
    m = P.measure
    if L.classify(i, k) != "TRANSIT":
        raise ValueError("(x, k) must be a transit pair")
    beta = 2 ** (m.d + 2) if beta is None else beta
    g = np.abs(np.asarray(f, dtype=float))
    s_val = float(apply_S(P, k, g)[i])
    hi = L.side(i, k - 1)
    if math.isinf(hi) or k - 1 == L.k_min:
        hi = L.side(i, L.k_min)
    lo = L.side(i, k)
    best, scanned = math.inf, 0
    side = hi
    while side >= lo * (1 - 1e-12):
        Q = Cube(m.points[i], side)
        side /= ratio
        if ad_class(L, Q) not in (k, k - 1):
            continue
        scanned += 1
        if not is_doubling(m, Q, alpha, beta):
            continue
        big = m.cube_indices(Q.center, alpha * Q.side)
        mean = float(np.sum(g[big] * m.masses[big]) / m.mass_of(big))
        r = mean / s_val if s_val > 0 else (0.0 if mean == 0 else math.inf)
        best = min(best, r)
        if r <= c6:
            return SmallMeanResult(True, Q, mean, s_val, best, scanned)
    return SmallMeanResult(False, None, math.nan, s_val, best, scanned)
