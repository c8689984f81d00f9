import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondoubling.cube import (Cube, check_delta_properties, delta, enclosing_cube,
                              find_big_doubling, is_doubling)
from nondoubling.measure import DiscreteMeasure, generate


def _delta_oracle(m, Q, R):
    """Direct double loop over atoms."""
    reach = max(abs(a - b) for a, b in zip(R.center, Q.center)) + R.side / 2
    outer = max(Q.side / 2, reach)
    total = 0.0
    for p, w in zip(m.points, m.masses):
        t = max(abs(a - b) for a, b in zip(p, Q.center))
        if Q.side / 2 < t <= outer:
            total += w / math.dist(p, Q.center) ** m.n
    return total


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 1000), s=st.floats(0.01, 0.5), grow=st.floats(1.0, 6.0),
       shift=st.floats(-1, 1))
def test_delta_matches_oracle(seed, s, grow, shift):
    rng = np.random.default_rng(seed)
    m = DiscreteMeasure(rng.random((80, 2)), rng.random(80) + 0.01, 1.5, 100.0)
    Q = Cube(rng.random(2), s)
    room = (s * grow - s) / 2
    R = Cube(Q.center + shift * room, s * grow)
    assert delta(m, Q, R) == pytest.approx(_delta_oracle(m, Q, R), rel=1e-12, abs=1e-300)


def test_delta_closed_form_on_lebesgue():
    # delta(Q, rho Q) on [0,1] with Q centred at 1/2: 2 log(rho) up to the discretisation
    m = generate("lebesgue_interval", res=20000)
    Q = Cube([0.5], 0.01)
    for rho in (2, 8, 50):
        assert delta(m, Q, Q * rho) == pytest.approx(2 * math.log(rho), rel=2e-3)


def test_delta_requires_nesting():
    m = generate("lebesgue_interval", res=64)
    with pytest.raises(ValueError, match="inside"):
        delta(m, Cube([0.5], 0.5), Cube([0.5], 0.2))


def test_enclosing_cube():
    E = enclosing_cube(Cube([0.0, 0.0], 1.0), Cube([1.0, 0.0], 2.0))
    assert E.side == 4.0 and np.array_equal(E.center, [0.0, 0.0])
    assert enclosing_cube(Cube([0.0], 1.0), Cube([0.0], math.inf)).is_whole


def test_cube_relations():
    Q = Cube([0.0, 0.0], 2.0)
    assert Q.contains(Cube([0.5, 0.5], 1.0))
    assert not Q.contains(Cube([0.6, 0.5], 1.0))
    assert Q.intersects(Cube([2.0, 0.0], 2.0))
    assert not Q.intersects(Cube([2.01, 0.0], 2.0))
    assert Cube([0.0], 0.0).is_point and Cube([0.0], math.inf).is_whole
    with pytest.raises(ValueError):
        Cube([0.0], -1.0)


@pytest.mark.parametrize("kind,params", [("lebesgue_interval", {"res": 2048}),
                                         ("saksman_intervals", {"K": 6}),
                                         ("lebesgue_square", {"res": 25})])
def test_delta_dilation_bound(kind, params):
    m = generate(kind, **params)
    rep = check_delta_properties(m, trials=200, seed=3)
    assert rep.stats["violations_a"] == 0
    assert rep.passed


def test_doubling_search():
    m = generate("lebesgue_interval", res=1024)
    Q = find_big_doubling(m, [0.5], 0.01)
    assert Q is not None and Q.side >= 0.01
    assert is_doubling(m, Q)
    # a cube at the end of the support is not (2, 1.5)-doubling
    assert not is_doubling(m, Cube([0.0], 0.2), 2.0, 1.5)
