"""Truncated singular integrals T_eps, the maximal truncation T_*, and a kernel-condition checker."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cube import PropertyReport
from .measure import DiscreteMeasure

__all__ = [
    "KernelSpec",
    "KERNELS",
    "get_kernel",
    "frac_kernel",
    "apply_T_eps",
    "apply_T_star",
    "default_eps_grid",
    "check_cz_conditions",
    "l2_norm_estimate",
]

BLOCK = 512


@dataclass(frozen=True)
class KernelSpec:
    """Kernel k(x, y) with size constant C1 and smoothness constants (C2, gamma).

    ``evaluator`` broadcasts over leading axes of x and y (last axis = coordinates)
    and is only called with x != y.
    """

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n: float
    C1: float
    C2: float
    gamma: float = 1.0
    d: int | None = None

    def __call__(self, x, y) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _hilbert(x, y):
    return 1.0 / (x[..., 0] - y[..., 0])


def _cauchy_re(x, y):
    diff = x - y
    return diff[..., 0] / (diff ** 2).sum(-1)


def _cauchy_im(x, y):
    diff = x - y
    return -diff[..., 1] / (diff ** 2).sum(-1)


def frac_kernel(n: float = 1.0) -> KernelSpec:
    """Non-negative kernel 1/|x-y|^n."""
    c2 = 4.0 if n == 1 else 2 * n * 2 ** (n + 1)
    return KernelSpec(
        "frac_I1" if n == 1 else f"frac_{n:g}",
        lambda x, y: np.sqrt(((x - y) ** 2).sum(-1)) ** -n,
        n, 1.0, c2, 1.0,
    )


KERNELS: dict[str, KernelSpec] = {
    "hilbert": KernelSpec("hilbert", _hilbert, 1.0, 1.0, 4.0, 1.0, d=1),
    "cauchy_re": KernelSpec("cauchy_re", _cauchy_re, 1.0, 1.0, 4.0, 1.0, d=2),
    "cauchy_im": KernelSpec("cauchy_im", _cauchy_im, 1.0, 1.0, 4.0, 1.0, d=2),
    "frac_I1": frac_kernel(1.0),
    "zero": KernelSpec("zero", lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1]),
                       1.0, 1.0, 1.0, 1.0),
}


def get_kernel(name: str) -> KernelSpec:
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None


def _check_dim(m: DiscreteMeasure, K: KernelSpec):
    if K.d is not None and K.d != m.d:
        raise ValueError(f"kernel {K.name} needs d={K.d}, measure has d={m.d}")


def _rows(m: DiscreteMeasure, K: KernelSpec, rows: np.ndarray):
    """Distances and kernel values (zero on the diagonal) for a block of rows."""
    x = m.points[rows][:, None, :]
    y = m.points[None, :, :]
    t = np.sqrt(((x - y) ** 2).sum(-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        kv = K(x, y)
    return t, np.where(t > 0, kv, 0.0)


def apply_T_eps(m: DiscreteMeasure, K: KernelSpec, f, eps: float) -> np.ndarray:
    """T_eps f(x) = sum over |x - y| > eps of k(x, y) f(y) mass(y)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_dim(m, K)
    fm = np.asarray(f, dtype=float) * m.masses
    out = np.zeros(m.size)
    for s in range(0, m.size, BLOCK):
        rows = np.arange(s, min(s + BLOCK, m.size))
        t, kv = _rows(m, K, rows)
        out[rows] = np.where(t > eps, kv, 0.0) @ fm
    return out


def default_eps_grid(m: DiscreteMeasure, count: int = 12) -> np.ndarray:
    lo = float(m.spacing.min()) if m.size > 1 else 1.0
    hi = max(m.diam, lo * 2)
    return np.geomspace(lo, hi, count)


def apply_T_star(m: DiscreteMeasure, K: KernelSpec, f, eps_grid=None) -> np.ndarray:
    """max over the grid of |T_eps f|, from suffix sums of distance-sorted terms."""
    _check_dim(m, K)
    grid = default_eps_grid(m) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if np.any(grid <= 0):
        raise ValueError("eps grid must be positive")
    fm = np.asarray(f, dtype=float) * m.masses
    out = np.zeros(m.size)
    for s in range(0, m.size, BLOCK):
        rows = np.arange(s, min(s + BLOCK, m.size))
        t, kv = _rows(m, K, rows)
        terms = kv * fm[None, :]
        order = np.argsort(t, axis=1, kind="stable")
        ts = np.take_along_axis(t, order, axis=1)
        tail = np.cumsum(np.take_along_axis(terms, order, axis=1)[:, ::-1], axis=1)[:, ::-1]
        tail = np.hstack([tail, np.zeros((len(rows), 1))])
        for r in range(len(rows)):
            pos = np.searchsorted(ts[r], grid, side="right")
            out[rows[r]] = np.max(np.abs(tail[r, pos]))
    return out


def check_cz_conditions(K: KernelSpec, trials: int = 10_000, seed: int = 0,
                        d: int | None = None, rel_tol: float = 1e-12) -> PropertyReport:
    """Sample (x, x', y) with |x - x'| <= |x - y|/2 and test the size and smoothness bounds."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = K.d or d or 1
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-3, 3, size=trials)
    x = rng.uniform(-1, 1, size=(trials, d)) * scale[:, None]
    y = x + rng.normal(size=(trials, d)) * scale[:, None]
    gap = np.sqrt(((x - y) ** 2).sum(-1))
    direction = rng.normal(size=(trials, d))
    # a share of samples sits on the extreme |x - x'| = |x - y|/2 toward y
    towards = (y - x) / gap[:, None]
    pick = rng.random(trials) < 0.2
    direction[pick] = towards[pick]
    direction /= np.sqrt((direction ** 2).sum(-1))[:, None]
    u = np.where(pick, 1.0, rng.random(trials))
    xp = x + direction * (u * gap / 2)[:, None]
    step = np.sqrt(((x - xp) ** 2).sum(-1))

    size_ratio = np.abs(K(x, y)) * gap ** K.n
    smooth = np.abs(K(x, y) - K(xp, y)) + np.abs(K(y, x) - K(y, xp))
    keep = step > 0
    smooth_ratio = np.zeros(trials)
    smooth_ratio[keep] = smooth[keep] * gap[keep] ** (K.n + K.gamma) / step[keep] ** K.gamma
    bad1 = np.flatnonzero(size_ratio > K.C1 * (1 + rel_tol))
    bad2 = np.flatnonzero(smooth_ratio > K.C2 * (1 + rel_tol))
    wit = {}
    if len(bad1):
        j = bad1[0]
        wit["size"] = (x[j].tolist(), y[j].tolist())
    if len(bad2):
        j = bad2[0]
        wit["smoothness"] = (x[j].tolist(), xp[j].tolist(), y[j].tolist())
    stats = {
        "trials": trials, "max_size_ratio": float(size_ratio.max()),
        "max_smooth_ratio": float(smooth_ratio.max()), "C1": K.C1, "C2": K.C2,
        "gamma": K.gamma, "size_violations": len(bad1), "smooth_violations": len(bad2),
    }
    return PropertyReport(f"cz_conditions[{K.name}]", not len(bad1) and not len(bad2), stats, wit)


def l2_norm_estimate(m: DiscreteMeasure, K: KernelSpec, eps: float, iters: int = 200,
                     seed: int = 0, rtol: float = 1e-10) -> float:
    """Operator norm of T_eps on L^2(mu) by power iteration on the symmetrised matrix.

    With D = diag(mass), the norm equals the spectral norm of D^(1/2) K_eps D^(1/2).
    """
    _check_dim(m, K)
    root = np.sqrt(m.masses)

    def forward(v):
        return root * apply_T_eps(m, K, v / root, eps)

    def backward(v):
        out = np.zeros(m.size)
        for s in range(0, m.size, BLOCK):
            rows = np.arange(s, min(s + BLOCK, m.size))
            t, kv = _rows(m, K, rows)
            out += (root[rows] * v[rows]) @ np.where(t > eps, kv, 0.0)
        return root * out

    rng = np.random.default_rng(seed)
    v = rng.normal(size=m.size)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = backward(forward(v))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        new = math.sqrt(nrm)
        v = w / nrm
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est
