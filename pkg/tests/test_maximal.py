import itertools
import math

import numpy as np
import pytest

from nondoubling.experiments import random_functions
from nondoubling.kernels import KernelProfile
from nondoubling.lattice import build_lattice
from nondoubling.maximal import (PhiParams, M_lambda, M_radial, N_phi, N_sup, N_trunc,
                                 default_radii, find_small_mean_doubling, fractional_integral,
                                 phi)
from nondoubling.measure import DiscreteMeasure, generate


@pytest.fixture(scope="module")
def small():
    rng = np.random.default_rng(8)
    return DiscreteMeasure(rng.random((40, 2)), rng.random(40) + 0.05, 1.5, 1e3)


RADII = np.geomspace(0.02, 3.0, 9)


def test_phi_profile():
    p = PhiParams(np.array([0.0]), 0.5, 2.0)
    vals = phi(p, np.array([[0.0], [0.5], [1.0], [2.0], [2.5]]), 1.0)
    assert vals.tolist() == [2.0, 2.0, 1.0, 0.5, 0.0]
    with pytest.raises(ValueError):
        PhiParams(np.array([0.0]), 2.0, 1.0)


def test_n_phi_matches_brute_force(small, rng):
    f = rng.random(small.size)
    got = N_phi(small, f, radii=RADII)
    for i in range(small.size):
        best = 0.0
        for r, R in itertools.combinations(RADII, 2):
            ph = phi(PhiParams(small.points[i], r, R), small.points, small.n)
            best = max(best, np.sum(ph * f * small.masses) / (1 + np.sum(ph * small.masses)))
        assert got[i] == pytest.approx(best, rel=1e-10)


def test_m_lambda_matches_brute_force(small, rng):
    f = rng.random(small.size)
    got = M_lambda(small, f, 2.0, radii=RADII)
    for i in range(small.size):
        t = np.linalg.norm(small.points - small.points[i], axis=1)
        best = max(np.sum((f * small.masses)[t <= r]) / np.sum(small.masses[t <= 2 * r])
                   for r in RADII)
        assert got[i] == pytest.approx(best, rel=1e-12)


def test_m_radial_matches_brute_force(small, rng):
    f = rng.random(small.size)
    got = M_radial(small, f, radii=RADII)
    cent = M_radial(small, f, radii=RADII, centered=True)
    expect = np.zeros(small.size)
    for c in range(small.size):
        t = np.linalg.norm(small.points - small.points[c], axis=1)
        for r in RADII:
            inside = t <= r
            val = np.sum((f * small.masses)[inside]) / r ** small.n
            expect[inside] = np.maximum(expect[inside], val)
    assert np.allclose(got, expect, rtol=1e-12, atol=0)
    assert np.all(cent <= got * (1 + 1e-12))


def test_fractional_integral_matches_double_loop(small, rng):
    f = rng.normal(size=small.size)
    core = np.full(small.size, 0.05)
    got, reg = fractional_integral(small, f), fractional_integral(small, f, core=core)
    for i in range(small.size):
        t = np.linalg.norm(small.points - small.points[i], axis=1)
        off = t > 0
        assert got[i] == pytest.approx(np.sum(f[off] * small.masses[off] / t[off] ** small.n),
                                       rel=1e-10)
        assert reg[i] == pytest.approx(np.sum(f * small.masses / np.maximum(t, 0.05) ** small.n),
                                       rel=1e-10)


def test_default_radii(saksman):
    g = default_radii(saksman, 0)
    assert g[0] == saksman.floor[0]
    assert g[-1] <= 4 * saksman.diam < g[-1] * 2 ** 0.25
    with pytest.raises(ValueError):
        default_radii(DiscreteMeasure([[0.0]], [1.0], 1.0, 1.0), 0)


@pytest.mark.parametrize("kind,params", [("saksman_intervals", {"K": 6}),
                                         ("lebesgue_interval", {"res": 512}),
                                         ("lebesgue_square", {"res": 16})])
def test_equivalence_and_domination(kind, params):
    m = generate(kind, **params)
    P = KernelProfile(build_lattice(m, 40.0))
    F = random_functions(m, 10, seed=4)
    Ns, Np, M1 = N_sup(P, F), N_phi(m, F), M_lambda(m, F, 1.0)
    ratio = Np / Ns
    assert ratio.min() >= 1 / 50 and ratio.max() <= 50
    assert np.all(Ns <= 50 * M1)


def test_n_sup_is_sublinear(cluster_profile, rng):
    P = cluster_profile
    f, g = rng.random(P.measure.size), rng.normal(size=P.measure.size)
    assert np.all(N_sup(P, f + g) <= N_sup(P, f) + N_sup(P, g) + 1e-12)
    assert np.allclose(N_sup(P, -2 * g), 2 * N_sup(P, g), rtol=1e-13)


def test_truncations_decrease(cluster_profile, rng):
    P = cluster_profile
    f = rng.random(P.measure.size)
    L = P.lattice
    prev = N_trunc(P, f, L.k_min)
    assert np.array_equal(prev, N_sup(P, f))
    for h in range(L.k_min + 1, L.k_max + 1):
        cur = N_trunc(P, f, h)
        assert np.all(cur <= prev)
        prev = cur


def test_small_mean_doubling_cube(cluster_profile):
    P = cluster_profile
    m = P.measure
    L = P.lattice
    i = m.size // 2
    k = L.k_min + 1
    res = find_small_mean_doubling(P, i, k, np.ones(m.size))
    assert res.found
    assert res.mean <= 50 * res.s_value
    assert res.cube.side >= L.side(i, k)
    with pytest.raises(ValueError):
        find_small_mean_doubling(P, i, L.last_transit[i] + 1, np.ones(m.size))
