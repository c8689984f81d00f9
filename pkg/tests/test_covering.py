import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondoubling import covering as cov
from nondoubling.cube import Cube


def _overlap_oracle(lo, hi):
    # the max depth is attained at a point whose coordinates are box lower corners
    best = 0
    for p in np.array(np.meshgrid(*[lo[:, j] for j in range(lo.shape[1])])).reshape(lo.shape[1], -1).T:
        best = max(best, int(np.sum(np.all((lo <= p) & (p <= hi), axis=1))))
    return best


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 2), count=st.integers(1, 25))
def test_max_overlap_matches_corner_scan(seed, d, count):
    rng = np.random.default_rng(seed)
    lo = rng.random((count, d))
    hi = lo + rng.random((count, d)) * 0.6
    assert cov.max_overlap(lo, hi) == _overlap_oracle(lo, hi)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), count=st.integers(0, 8))
def test_box_covered_matches_sampling(seed, count):
    rng = np.random.default_rng(seed)
    lo = rng.random((count, 2)) * 0.8
    hi = lo + rng.random((count, 2)) * 0.7
    t_lo, t_hi = np.array([0.2, 0.2]), np.array([0.6, 0.6])
    got = cov.box_covered(t_lo, t_hi, lo, hi)
    # sample every cell of the coordinate grid formed by all box edges
    xs = np.unique(np.concatenate([[0.2, 0.6], lo[:, 0], hi[:, 0]]).clip(0.2, 0.6))
    ys = np.unique(np.concatenate([[0.2, 0.6], lo[:, 1], hi[:, 1]]).clip(0.2, 0.6))
    pts = [(a, b) for a in np.concatenate([xs, (xs[1:] + xs[:-1]) / 2])
           for b in np.concatenate([ys, (ys[1:] + ys[:-1]) / 2])]
    inside = [bool(np.any(np.all((lo <= p) & (p <= hi), axis=1))) if count else False
              for p in pts]
    assert got == all(inside)


REGIONS = [
    cov.interior_of_box([0, 0], [1, 1]),
    cov.half_space([1.0, 0.3], 0.4),
    cov.open_ball([0.5, 0.5], 0.4),
]


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: r.name)
def test_whitney_certificate(region):
    W = cov.whitney(region, Cube([0.5, 0.5], 1.0), max_depth=8)
    cert = cov.whitney_certificate(W)
    assert len(W) > 0
    assert cert["passed"], cert
    assert cert["overlap_4q"] <= 10 ** 2
    for Q in W.cubes:
        corners = Q.center + Q.side / 2 * np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]])
        assert all(region.contains(c) for c in corners)


def test_whitney_fills_box_up_to_depth():
    region = cov.interior_of_box([0, 0], [1, 1])
    W = cov.whitney(region, Cube([0.5, 0.5], 1.0), max_depth=9)
    area = sum(Q.side ** 2 for Q in W.cubes) + sum(Q.side ** 2 for Q in W.incomplete)
    assert area == pytest.approx(1.0, abs=0.02)


def test_whitney_edge_cases():
    W = cov.whitney(cov.empty_region(), Cube([0.0], 1.0))
    assert len(W) == 0 and cov.whitney_certificate(W)["passed"]
    with pytest.raises(ValueError):
        cov.whitney(REGIONS[0], Cube([0.5, 0.5], math.inf))


def test_neighbor_layers_grow():
    W = cov.whitney(REGIONS[2], Cube([0.5, 0.5], 1.0), max_depth=7)
    i = len(W) // 2
    prev = set()
    for m in (1, 2, 3):
        big, members = cov.neighbor_layers(W, i, m)
        assert i in members and prev <= members
        prev = members
    assert big.side == 2 * W.cubes[i].side
    with pytest.raises(ValueError):
        cov.neighbor_layers(W, i, 0)


def _random_cubes(rng, count, d):
    centers = rng.random((count, d))
    sides = 10 ** rng.uniform(-3, -0.5, size=count)
    return [Cube(c, s) for c, s in zip(centers, sides)], centers


@pytest.mark.parametrize("seed", range(50))
def test_wiener_selection(seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    cubes, pts = _random_cubes(rng, int(rng.integers(5, 500)), d)
    res = cov.wiener_select(cubes, pts)
    cert = res.certificate
    assert cert["passed"], cert
    sel = res.selected
    c = np.array([cubes[j].center for j in sel])
    s = np.array([cubes[j].side for j in sel])
    gap = np.max(np.abs(c[:, None] - c[None]), axis=-1)
    np.fill_diagonal(gap, np.inf)
    assert np.all(gap > s[:, None] + s[None, :])  # 2Q_j pairwise disjoint
    reach = np.max(np.abs(pts[:, None] - c[None]), axis=-1)
    assert np.all(np.any(reach <= 10 * s[None, :] * (1 + 1e-12), axis=1))  # A inside U 20Q_j
    for k in set(range(len(cubes))) - set(sel):
        meet = np.max(np.abs(c - cubes[k].center), axis=1) <= s + cubes[k].side
        assert np.all(cubes[k].side <= 10 * s[meet] * (1 + 1e-12))


def test_wiener_trivial_cases():
    assert cov.wiener_select([]).selected == []
    assert cov.wiener_select([Cube([0.0], 1.0), Cube([0.0], math.inf)]).selected == [1]


@pytest.mark.parametrize("seed", range(50))
def test_besicovitch_selection(seed):
    rng = np.random.default_rng(100 + seed)
    d = 1 + seed % 2
    count = int(rng.integers(5, 400))
    pts = rng.random((count, d))
    sides = 10 ** rng.uniform(-3, -0.3, size=count)
    cubes = [Cube(p, s) for p, s in zip(pts, sides)]
    res = cov.besicovitch_select(pts, cubes)
    cert = res.certificate
    assert cert["passed"], cert
    sel = np.array(res.selected)
    t = np.max(np.abs(pts[:, None] - pts[sel][None]), axis=-1)
    inside = t <= sides[sel][None, :] / 2 * (1 + 1e-12)
    assert np.all(inside.any(axis=1))
    # x in Q_y forces side(Q_x) <= 4 side(Q_y)
    rows, cols = np.nonzero(inside)
    assert np.all(sides[rows] <= 4 * sides[sel][cols] * (1 + 1e-12))
    # chooser: x lies in half of its chosen cube, which is the largest such
    half = np.max(np.abs(pts - pts[res.chooser]), axis=1) <= sides[res.chooser] / 4 * (1 + 1e-12)
    assert np.all(half)


def test_besicovitch_callable_and_validation():
    pts = np.array([[0.0], [0.1], [0.5]])
    res = cov.besicovitch_select(pts, lambda p: Cube(p, 0.3))
    assert res.certificate["passed"]
    with pytest.raises(ValueError):
        cov.besicovitch_select(pts, [Cube([0.2], 0.3)] * 3)
    with pytest.raises(ValueError):
        cov.besicovitch_select(pts, [Cube([0.0], 0.3)])
