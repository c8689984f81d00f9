"""Closed axis-parallel cubes, the cube distance delta, and doubling-cube searches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measure import DiscreteMeasure

__all__ = [
    "Cube",
    "WHOLE_SPACE",
    "PropertyReport",
    "enclosing_cube",
    "delta",
    "delta_from",
    "check_delta_properties",
    "is_doubling",
    "find_big_doubling",
    "find_mu_sigma_doubling",
]

WHOLE_SPACE = math.inf
_REL = 1e-12


@dataclass(frozen=True, eq=False)
class Cube:
    """Closed cube with centre ``center`` and side ``side``.

    ``side == 0`` is a point and ``side == inf`` is the whole space.
    """

    center: np.ndarray
    side: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "side", float(self.side))
        if self.side < 0 or math.isnan(self.side):
            raise ValueError("cube side must be >= 0")

    @property
    def d(self) -> int:
        return self.center.shape[0]

    @property
    def is_point(self) -> bool:
        return self.side == 0.0

    @property
    def is_whole(self) -> bool:
        return math.isinf(self.side)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.side / 2

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.side / 2

    def scaled(self, rho: float) -> "Cube":
        return Cube(self.center, self.side * rho)

    def __mul__(self, rho: float) -> "Cube":
        return self.scaled(rho)

    __rmul__ = __mul__

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.is_whole:
            return np.ones(len(pts), dtype=bool)
        return np.max(np.abs(pts - self.center), axis=1) <= self.side / 2

    def contains(self, other: "Cube", slack: float = _REL) -> bool:
        if self.is_whole:
            return True
        if other.is_whole:
            return False
        reach = np.max(np.abs(other.center - self.center)) + other.side / 2
        return reach <= self.side / 2 * (1 + slack)

    def intersects(self, other: "Cube") -> bool:
        if self.is_whole or other.is_whole:
            return True
        return bool(np.all(np.abs(self.center - other.center) <= (self.side + other.side) / 2))

    def __repr__(self) -> str:
        c = ", ".join(f"{v:.6g}" for v in self.center)
        return f"Cube(center=({c}), side={self.side:.6g})"


def enclosing_cube(Q: Cube, R: Cube) -> Cube:
    """Smallest cube concentric with Q containing both Q and R."""
    if R.is_whole or Q.is_whole:
        return Cube(Q.center, WHOLE_SPACE)
    reach = float(np.max(np.abs(R.center - Q.center)) + R.side / 2)
    return Cube(Q.center, max(Q.side, 2 * reach))


def delta_from(m: DiscreteMeasure, center, inner_side: float, outer_side: float) -> float:
    """Sum of mass/|a - center|^n over atoms in the closed outer cube but outside the inner one."""
    z = np.asarray(center, dtype=float)
    t = np.max(np.abs(m.points - z), axis=1)
    sel = (t > inner_side / 2) & (t <= outer_side / 2)
    if not np.any(sel):
        return 0.0
    r = np.sqrt(np.sum((m.points[sel] - z) ** 2, axis=1))
    return float(math.fsum(m.masses[sel] / r ** m.n))


def delta(m: DiscreteMeasure, Q: Cube, R: Cube) -> float:
    if not R.contains(Q):
        raise ValueError(f"delta needs Q inside R; got Q={Q}, R={R}")
    QR = enclosing_cube(Q, R)
    return delta_from(m, Q.center, Q.side, QR.side)


@dataclass
class PropertyReport:
    name: str
    passed: bool
    stats: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        body = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.stats.items())
        return f"[{flag}] {self.name}: {body}"


def _random_nested(rng, m: DiscreteMeasure, lo: float, hi: float):
    """Random P in Q in R: P centred at an atom, Q and R shifted inside the room left."""
    centre = m.points[rng.integers(m.size)]
    s_p = lo * (hi / lo) ** rng.random()
    s_q = s_p * 100 ** rng.random()
    s_r = s_q * 100 ** rng.random()
    zq = centre + (rng.random(m.d) - 0.5) * (s_q - s_p)
    zr = zq + (rng.random(m.d) - 0.5) * (s_r - s_q)
    return Cube(centre, s_p), Cube(zq, s_q), Cube(zr, s_r)


def check_delta_properties(m: DiscreteMeasure, trials: int = 200, seed: int = 0,
                           rhos=(2.0, 4.0, 8.0), c_log: float = math.inf,
                           eps0: float = math.inf, side_range: tuple[float, float] | None = None
                           ) -> PropertyReport:
    """Sample cubes and nested triples; check delta(Q, rho Q) <= c0 2^n rho^n and report
    the logarithmic-growth and additivity statistics.

    ``c_log`` and ``eps0`` are calibrated bounds for the last two statistics;
    they default to infinity (report only).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = side_range if side_range else (m.r_min, max(m.diam, m.r_min))
    bound_a = m.c0 * 2 ** m.n
    worst_a, wit_a, violations = 0.0, None, 0
    worst_c, wit_c = 0.0, None
    worst_d, wit_d = 0.0, None
    for _ in range(trials):
        P, Q, R = _random_nested(rng, m, lo, hi)
        for rho in rhos:
            val = delta(m, Q, Q * rho) / rho ** m.n
            if val > bound_a * (1 + _REL):
                violations += 1
            if val > worst_a:
                worst_a, wit_a = val, (Q, rho)
        dqr = delta(m, Q, R)
        ratio = dqr / (1 + math.log(R.side / Q.side))
        if ratio > worst_c:
            worst_c, wit_c = ratio, (Q, R)
        defect = abs(delta(m, P, R) - delta(m, P, Q) - dqr)
        if defect > worst_d:
            worst_d, wit_d = defect, (P, Q, R)
    passed = violations == 0 and worst_c <= c_log and worst_d <= eps0
    return PropertyReport(
        "delta_properties", passed,
        {"max_delta_rho_over_rho_n": worst_a, "bound_a": bound_a, "violations_a": violations,
         "max_delta_over_log": worst_c, "max_additivity_defect": worst_d, "trials": trials},
        {"a": wit_a, "c": wit_c, "d": wit_d},
    )


def _weighted_mass(m: DiscreteMeasure, Q: Cube, weights=None) -> float:
    idx = m.cube_indices(Q.center, Q.side)
    if weights is None:
        return m.mass_of(idx)
    return float(math.fsum(np.asarray(weights)[idx] * m.masses[idx]))


def is_doubling(m: DiscreteMeasure, Q: Cube, alpha: float = 2.0, beta: float = 4.0,
                weights=None) -> bool:
    """(alpha, beta)-doubling test; ``weights`` turns mu into the measure weights*mu."""
    if alpha <= 1 or beta <= 1:
        raise ValueError("need alpha > 1 and beta > 1")
    inner = _weighted_mass(m, Q, weights)
    outer = _weighted_mass(m, Q * alpha, weights)
    if inner == 0:
        return outer == 0
    return outer <= beta * inner


def find_big_doubling(m: DiscreteMeasure, x, c: float, alpha: float = 2.0,
                      beta: float = 8.0) -> Cube:
    """First (alpha, beta)-doubling cube in the ladder c, alpha c, alpha^2 c, ... centred at x."""
    if beta <= alpha ** m.n:
        raise ValueError(f"need beta > alpha^n = {alpha ** m.n:g}")
    if c <= 0:
        raise ValueError("c must be positive")
    cap = 10 * max(m.diam, c)
    side = c
    while True:
        Q = Cube(x, side)
        if side >= cap or is_doubling(m, Q, alpha, beta):
            return Q
        side = min(side * alpha, cap)


def find_mu_sigma_doubling(m: DiscreteMeasure, sigma, x, Q: Cube, R: Cube,
                           beta: float, factor: float = 100.0) -> Cube | None:
    """Largest P in R, R/100, R/100^2, ... (not below Q) doubling for both mu and sigma*mu.

    Returns None when no cube of the ladder qualifies.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not (np.allclose(Q.center, x) and np.allclose(R.center, x)):
        raise ValueError("Q and R must be centred at x")
    if Q.side > R.side:
        raise ValueError("need Q inside R")
    side = R.side
    while side >= Q.side * (1 - _REL):
        P = Cube(x, side)
        if (is_doubling(m, P, factor, beta)
                and is_doubling(m, P, factor, beta, weights=sigma)):
            return P
        side /= factor
    return None
