"""Radial approximation-of-identity kernels s_k(x, y) built on a lattice, and the operators S_k."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cube import PropertyReport
from .lattice import Lattice

__all__ = [
    "KernelProfile",
    "profile_values",
    "s_eval",
    "s_eval_at",
    "kernel_block",
    "apply_S",
    "apply_S_adjoint",
    "apply_column",
    "kernel_mass",
    "adjoint_mass",
    "mass_window",
    "check_kernel_lemmas",
]

BLOCK = 512
WINDOW = (0.9, 10 / 9)


def profile_values(t, r_core, r_out, r_supp, A: float, n: float) -> np.ndarray:
    """Capped 1/(A t^n), multiplied by a C^1 cubic cut from r_out to r_supp.

    Arguments broadcast. A zero core radius drops the t = 0 term.
    """
    t = np.asarray(t, dtype=float)
    eff = np.maximum(t, r_core)
    with np.errstate(divide="ignore"):
        if n == 1:
            val = 1.0 / eff
        elif n == 2:
            val = 1.0 / (eff * eff)
        else:
            val = eff ** -n
    val = np.where(eff > 0, val / A, 0.0)
    # parameter-shaped masks: a cut needs a finite support beyond r_out
    r_out = np.asarray(r_out, dtype=float)
    with np.errstate(invalid="ignore"):
        width = np.asarray(r_supp, dtype=float) - r_out
    ok = np.isfinite(width) & (width > 0)
    lo = np.where(ok, r_out, 0.0)
    span = np.where(ok, width, np.inf)
    u = np.clip((t - lo) / span, 0.0, 1.0)
    return val * (1 - u * u * (3 - 2 * u))


@dataclass(frozen=True, eq=False)
class KernelProfile:
    """Kernel parameters per atom and scale.

    For x at scale k with side l = side(Q_{x,k}) and parent side P:
    core radius max(l/2, floor), exact 1/(A t^n) out to P sqrt(d)/2, then a
    cubic cut reaching 0 at P (the inscribed radius of 2Q_{x,k-1}). The scale
    right below the initial cube has no cut. s_k(x, .) vanishes once the
    parent is a point.
    """

    lattice: Lattice
    _core_floor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.lattice.measure.d > 3:
            raise ValueError("the cut annulus is empty for d > 3")
        object.__setattr__(self, "_core_floor", self.lattice.core_floor())

    @property
    def measure(self):
        return self.lattice.measure

    @property
    def A(self) -> float:
        return self.lattice.A

    @property
    def levels(self) -> range:
        return self.lattice.levels

    def params(self, k: int, idx=None):
        """(r_core, r_out, r_supp, live) for atoms ``idx`` (all by default)."""
        L = self.lattice
        idx = np.arange(self.measure.size) if idx is None else np.asarray(idx)
        if k <= L.k_min:
            z = np.zeros(len(idx))
            return z, z, z, np.zeros(len(idx), dtype=bool)
        ell = np.asarray(L.side(idx, k), dtype=float)
        par = np.asarray(L.kernel_side(idx, k - 1), dtype=float)
        live = par > 0
        rc = np.maximum(ell / 2, self._core_floor[idx])
        r_out = par * math.sqrt(self.measure.d) / 2
        return rc, r_out, par.copy(), live

    def params_at(self, k: int, pts: np.ndarray):
        """Same as :meth:`params` for arbitrary points (Lipschitz lattices only)."""
        L = self.lattice
        pts = np.atleast_2d(pts)
        if k <= L.k_min:
            z = np.zeros(len(pts))
            return z, z, z, np.zeros(len(pts), dtype=bool)
        ell = L.side_at(pts, k)
        par = L.side_at(pts, k - 1)
        rc = np.maximum(ell / 2, L.floor_at(pts) / 2)
        return rc, par * math.sqrt(self.measure.d) / 2, par, par > 0


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))


def kernel_block(P: KernelProfile, k: int, rows) -> np.ndarray:
    """Matrix s_k(x_i, y_j) for atoms i in ``rows`` and all atoms j."""
    m = P.measure
    rows = np.asarray(rows)
    rc, r_out, r_supp, live = P.params(k, rows)
    t = _dist(m.points[rows], m.points)
    vals = profile_values(t, rc[:, None], r_out[:, None], r_supp[:, None], P.A, m.n)
    vals[~live] = 0.0
    return vals


def s_eval(P: KernelProfile, k: int, i: int, y) -> np.ndarray:
    """s_k(x_i, y) at the points y."""
    m = P.measure
    y = np.atleast_2d(np.asarray(y, dtype=float))
    rc, r_out, r_supp, live = P.params(k, [i])
    if not live[0]:
        return np.zeros(len(y))
    t = np.sqrt(((y - m.points[i]) ** 2).sum(-1))
    return profile_values(t, rc[0], r_out[0], r_supp[0], P.A, m.n)


def s_eval_at(P: KernelProfile, k: int, x, y) -> np.ndarray:
    """s_k(x, y) at arbitrary first arguments x; needs Lipschitz sides."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    rc, r_out, r_supp, live = P.params_at(k, x)
    t = np.sqrt(((x - y) ** 2).sum(-1))
    return np.where(live, profile_values(t, rc, r_out, r_supp, P.A, P.measure.n), 0.0)


def _times_mass(m, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim not in (1, 2) or f.shape[0] != m.size:
        raise ValueError("f must have one value (or one row) per atom")
    return f * (m.masses if f.ndim == 1 else m.masses[:, None])


def apply_S(P: KernelProfile, k: int, f) -> np.ndarray:
    """(S_k f)(x) = sum_y s_k(x, y) f(y) mass(y) at every atom x.

    ``f`` may also be an (atoms, functions) array.
    """
    m = P.measure
    fm = _times_mass(m, f)
    out = np.zeros(fm.shape)
    for s in range(0, m.size, BLOCK):
        rows = np.arange(s, min(s + BLOCK, m.size))
        out[rows] = kernel_block(P, k, rows) @ fm
    return out


def apply_S_adjoint(P: KernelProfile, k: int, g) -> np.ndarray:
    """(S_k^* g)(y) = sum_x s_k(x, y) g(x) mass(x)."""
    m = P.measure
    gm = _times_mass(m, g)
    out = np.zeros(gm.shape)
    for s in range(0, m.size, BLOCK):
        rows = np.arange(s, min(s + BLOCK, m.size))
        out += kernel_block(P, k, rows).T @ gm[rows]
    return out


def kernel_mass(P: KernelProfile, k: int) -> np.ndarray:
    return apply_S(P, k, np.ones(P.measure.size))


def adjoint_mass(P: KernelProfile, k: int) -> np.ndarray:
    return apply_S_adjoint(P, k, np.ones(P.measure.size))


def mass_window(P: KernelProfile, margin: int = 1, adjoint: bool = False) -> dict:
    """Kernel masses over transit pairs (x, k) with k <= K_x - margin.

    Returns min, max and the count of tested pairs, with witnesses.
    """
    L = P.lattice
    lo, hi, count = math.inf, -math.inf, 0
    wit_lo = wit_hi = None
    for k in range(L.k_min + 1, L.k_max + 1):
        sel = np.flatnonzero(L.last_transit - margin >= k)
        if len(sel) == 0:
            continue
        mass = adjoint_mass(P, k) if adjoint else kernel_mass(P, k)
        vals = mass[sel]
        count += len(sel)
        j = int(np.argmin(vals))
        if vals[j] < lo:
            lo, wit_lo = float(vals[j]), (int(sel[j]), k)
        j = int(np.argmax(vals))
        if vals[j] > hi:
            hi, wit_hi = float(vals[j]), (int(sel[j]), k)
    return {"min": lo, "max": hi, "count": count, "argmin": wit_lo, "argmax": wit_hi}


def check_kernel_lemmas(P: KernelProfile, trials: int = 500, seed: int = 0,
                        fd_step: float = 1e-4) -> PropertyReport:
    """Support in the first variable, quasi-symmetry and the finite-difference x-gradient.

    Support: s_k(x, y) > 0 forces x in Q_{y,k-2}. Quasi-symmetry reports
    C_qs = max s_k(x,y) / (s_{k-1}(y,x) + s_k(y,x) + s_{k+1}(y,x)). The gradient
    constant is max |d_x s_k(x,y)| A |x-y|^(n+1); with a plain lattice the
    sides are frozen at x and only the radial profile moves.
    """
    L = P.lattice
    m = P.measure
    rng = np.random.default_rng(seed)
    levels = list(P.levels)
    stats, wit = {"trials": trials}, {}
    if not levels:
        stats.update(support_violations=0, C_qs=0.0, C_grad=0.0)
        return PropertyReport("kernel_lemmas", True, stats, wit)

    support_bad, c_qs, c_grad = 0, 0.0, 0.0
    ys = rng.integers(m.size, size=trials)
    ks = rng.choice(levels, size=trials)
    for y, k in zip(ys, ks):
        col = np.array([s_eval(P, k, i, m.points[y])[0] for i in range(m.size)]) \
            if m.size <= 64 else apply_column(P, k, y)
        pos = np.flatnonzero(col > 0)
        gp = L.kernel_side(y, k - 2)
        reach = np.max(np.abs(m.points[pos] - m.points[y]), axis=1)
        bad = pos[reach > gp / 2 * (1 + 1e-12)]
        if len(bad):
            support_bad += len(bad)
            wit.setdefault("support", (int(bad[0]), int(y), int(k)))

        # quasi-symmetry on the positive entries of the column
        back = sum(kernel_block(P, j, [y])[0] for j in (k - 1, k, k + 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(back[pos] > 0, col[pos] / back[pos], np.inf)
        if len(ratio) and ratio.max() > c_qs:
            c_qs = float(ratio.max())
            wit["quasi_symmetry"] = (int(pos[np.argmax(ratio)]), int(y), int(k))

        # gradient in the first variable at a random positive entry off the diagonal
        off = pos[pos != y]
        if len(off):
            x = int(rng.choice(off))
            gap = float(np.linalg.norm(m.points[x] - m.points[y]))
            h = fd_step * gap
            direction = rng.normal(size=m.d)
            direction /= np.linalg.norm(direction)
            xp, xm = m.points[x] + h * direction, m.points[x] - h * direction
            if L.lipschitz:
                pair = s_eval_at(P, k, np.stack([xp, xm]), m.points[y])
            else:
                rc, r_out, r_supp, _ = P.params(k, [x])
                t = np.linalg.norm(np.stack([xp, xm]) - m.points[y], axis=1)
                pair = profile_values(t, rc[0], r_out[0], r_supp[0], P.A, m.n)
            grad = abs(pair[0] - pair[1]) / (2 * h)
            c = grad * P.A * gap ** (m.n + 1)
            if c > c_grad:
                c_grad = float(c)
                wit["gradient"] = (x, int(y), int(k))
    stats.update(support_violations=support_bad, C_qs=c_qs, C_grad=c_grad)
    passed = support_bad == 0 and math.isfinite(c_qs)
    return PropertyReport("kernel_lemmas", passed, stats, wit)


def apply_column(P: KernelProfile, k: int, y: int) -> np.ndarray:
    """Column s_k(., y) over all atoms."""
    m = P.measure
    rc, r_out, r_supp, live = P.params(k)
    t = np.sqrt(((m.points - m.points[y]) ** 2).sum(-1))
    vals = profile_values(t, rc, r_out, r_supp, P.A, m.n)
    vals[~live] = 0.0
    return vals
