import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondoubling.cube import Cube
from nondoubling.kernels import KernelProfile, apply_S
from nondoubling.lattice import build_lattice
from nondoubling.measure import generate, saksman_component
from nondoubling.weights import (Weight, constant_weight, conjugate, default_cube_family,
                                 dual_weight, reverse_holder_probe, sawyer_constants, w0, w_bad,
                                 weighted_norm_estimate, z_infty_estimate)


def test_profiles(saksman):
    comp = saksman_component(saksman)
    good, bad = w0(saksman), w_bad(saksman)
    for k in range(1, 7):
        sel = comp == k
        expect = 1.0 if k == 1 else math.factorial(k - 2)
        assert np.allclose(good.values[sel], expect, rtol=1e-12)
        assert np.allclose(bad.values[sel], math.factorial(k) * k * k, rtol=1e-12)


def test_factorial_weights_stay_finite_in_log_space():
    m = generate("saksman_intervals", K=12, res=2)
    w = w_bad(m)
    assert w.log_values.max() == pytest.approx(math.lgamma(13) + 2 * math.log(12))


@settings(max_examples=50, deadline=None)
@given(p=st.floats(1.05, 8.0), seed=st.integers(0, 1000))
def test_dual_weight_involution(p, seed):
    saksman = generate("saksman_intervals", K=4, res=5)
    v = np.exp(np.random.default_rng(seed).normal(size=saksman.size) * 3)
    w = Weight(saksman, v, p)
    sig = dual_weight(w)
    assert sig.p == pytest.approx(conjugate(p))
    assert np.allclose(sig.values, v ** (-1 / (p - 1)), rtol=1e-12)
    assert dual_weight(sig) is w
    fresh = dual_weight(Weight(saksman, sig.values, sig.p))
    assert np.max(np.abs(fresh.values / v - 1)) <= 1e-12 * max(1.0, 1 / (p - 1))


def test_invalid_weights(saksman):
    with pytest.raises(ValueError):
        Weight(saksman, -np.ones(saksman.size))
    with pytest.raises(ValueError):
        Weight(saksman, np.ones(saksman.size), p=1.0)
    with pytest.raises(ValueError):
        conjugate(0.5)


def _sawyer_oracle(P, w, family):
    m = P.measure
    sigma = dual_weight(w)
    q = conjugate(w.p)
    strong = dual = 0.0
    for Q in family:
        chi = Q.contains_points(m.points).astype(float)
        sQ, wQ = np.sum(sigma.values * chi * m.masses), np.sum(w.values * chi * m.masses)
        if sQ == 0 or wQ == 0:
            continue
        for k in P.levels:
            a = apply_S(P, k, sigma.values * chi)
            b = apply_S(P, k, w.values * chi)
            strong = max(strong, np.sum(np.abs(a) ** w.p * w.values * m.masses) / sQ)
            dual = max(dual, np.sum(np.abs(b) ** q * sigma.values * m.masses) / wQ)
    return strong, dual


def test_sawyer_matches_per_cube_loop(saksman_profile, rng):
    P = saksman_profile
    m = P.measure
    w = Weight(m, 1 + rng.random(m.size) * 5, 3.0)
    family = [Cube(m.points[i], s) for i, s in zip(rng.integers(m.size, size=25),
                                                    rng.uniform(0.001, 2, size=25))]
    family += [Cube(m.points[i], 0.0) for i in rng.integers(m.size, size=10)]
    rep = sawyer_constants(P, w, cube_family=family)
    s, d = _sawyer_oracle(P, w, family)
    assert rep.strong_const == pytest.approx(s, rel=1e-10)
    assert rep.dual_const == pytest.approx(d, rel=1e-10)


def test_sawyer_symmetry_and_scaling(saksman_profile):
    P = saksman_profile
    w = w0(P.measure)
    a = sawyer_constants(P, w, seed=3)
    b = sawyer_constants(P, dual_weight(w), seed=3)
    c = sawyer_constants(P, w.scaled(11.0), seed=3)
    assert a.dual_const == pytest.approx(b.strong_const, rel=1e-12)
    assert a.strong_const == pytest.approx(c.strong_const, rel=1e-10)
    assert a.dual_const == pytest.approx(c.dual_const, rel=1e-10)


def test_unit_weight_constants(saksman_profile):
    rep = sawyer_constants(saksman_profile, constant_weight(saksman_profile.measure))
    assert max(rep.strong_const, rep.dual_const) <= (10 / 9 + 0.02) ** 2


def test_cube_family_contents(saksman_profile):
    fam = default_cube_family(saksman_profile, n_random=10)
    m = saksman_profile.measure
    assert any(Q.is_point for Q in fam)
    assert sum(Q.is_point for Q in fam) == m.size
    keys = {(tuple(Q.center), Q.side) for Q in fam}
    assert len(keys) == len(fam)


def test_w0_dual_constant_stable():
    vals = []
    for K in (6, 8):
        m = generate("saksman_intervals", K=K)
        vals.append(sawyer_constants(KernelProfile(build_lattice(m, 40.0)), w0(m)).dual_const)
    assert abs(vals[1] / vals[0] - 1) < 0.10


@pytest.mark.slow
def test_w_bad_dual_constant_doubles_by_k10():
    # slower than the acceptance span K = 6 -> 8 but unbounded in K
    vals = {}
    for K in (6, 8, 10):
        m = generate("saksman_intervals", K=K)
        vals[K] = sawyer_constants(KernelProfile(build_lattice(m, 40.0)), w_bad(m)).dual_const
    assert vals[6] < vals[8] < vals[10]
    assert vals[10] / vals[6] >= 2.0


def test_reverse_holder_sums():
    m = generate("saksman_intervals", K=12, res=10)
    w = w0(m, 2.0)
    ks = list(range(2, 13))
    rh0 = reverse_holder_probe(m, w, 0.0, ks)
    rh = reverse_holder_probe(m, w, 0.5, ks)
    comp = saksman_component(m)
    direct = [math.fsum((w.values ** 1.5 * m.masses)[comp <= K]) for K in ks]
    assert np.allclose(rh.sums, direct, rtol=1e-12)
    # w0 is integrable: sum of (k-2)!/(2 k!) converges
    assert rh0.sums[-1] - rh0.sums[-2] < 1e-2
    assert not rh0.diverges
    assert all(b > a for a, b in zip(rh.sums, rh.sums[1:]))
    # w0^(1+eps) is not: the partial sums keep growing
    assert rh.sums[ks.index(10)] / rh.sums[ks.index(6)] >= 2.0
    assert rh.diverges


def test_reverse_holder_log_space_overflow():
    # K = 17 is about the last interval resolvable in double precision
    m = generate("saksman_intervals", K=17, res=4)
    rh = reverse_holder_probe(m, w_bad(m), 50.0, [5, 10, 17])
    assert math.isinf(rh.sums[-1]) and rh.overflow_at == 10
    assert math.isinf(rh.ratio) and rh.diverges
    assert all(math.isfinite(v) for v in rh.log_sums)
    with pytest.raises(ValueError):
        reverse_holder_probe(m, w_bad(m), -0.1, [10])


@pytest.fixture(scope="module")
def deep_profile(cluster):
    return KernelProfile(build_lattice(cluster, 12.0))


def test_z_infty_unit_weight(deep_profile):
    rep = z_infty_estimate(deep_profile, constant_weight(deep_profile.measure), trials=15)
    assert rep.admissible > 0
    assert 0 < rep.tau_hat <= 1.0 + 1e-12
    assert rep.witness["k"] + 3 <= deep_profile.lattice.last_transit.max()


def test_z_infty_without_deep_scales(saksman_profile):
    rep = z_infty_estimate(saksman_profile, w0(saksman_profile.measure), trials=5)
    assert rep.tau_hat is None and rep.admissible == 0


def test_weighted_norm_estimates(cluster_profile):
    P = cluster_profile
    one = constant_weight(P.measure)
    k = P.lattice.k_min + 1
    sk = weighted_norm_estimate(P, f"Sk:{k}", one, n_random=5, n_cubes=20)
    n = weighted_norm_estimate(P, "N", one, n_random=5, n_cubes=20)
    assert 0 < sk <= 10 / 9 + 0.02
    assert n >= sk - 1e-12
    h = weighted_norm_estimate(P, "Teps:hilbert", one, n_random=5, n_cubes=20)
    assert h > 0
    with pytest.raises(ValueError):
        weighted_norm_estimate(P, "Bogus", one)


def test_reverse_holder_closed_form():
    # sum over k <= K of ((k-2)!)^1.5 * |I_k| with |I_k| = 1/(2 k!), w0 = 1 on I_1
    def S(K):
        return sum((1.0 if k == 1 else math.factorial(k - 2) ** 1.5) / (2 * math.factorial(k))
                   for k in range(1, K + 1))

    m = generate("saksman_intervals", K=10, res=10)
    rh = reverse_holder_probe(m, w0(m), 0.5, [6, 8, 10])
    # cell widths of I_10 come from differencing endpoints near 0.1: ~1e-10 relative
    assert rh.sums == pytest.approx([S(6), S(8), S(10)], rel=1e-9)
    assert S(8) / S(6) == pytest.approx(1.35743, abs=1e-5)
    assert S(10) / S(6) == pytest.approx(2.91, abs=0.01)
