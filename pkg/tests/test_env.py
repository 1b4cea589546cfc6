import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgmeta.env import (BARRIER_VIOLATED, Obstacle, Workspace, barrier_cost, barrier_grad, clearances,
                        default_workspace, is_feasible, scaled_distance, scaled_distance_grad,
                        sensing_penalty)

from .conftest import central_diff, rel_err

coord = st.floats(-20, 20, allow_nan=False)
point = st.tuples(coord, coord).map(np.array)


def one(center=(0.0, 0.0), d=1.0, order=math.inf, scaling=(1.0, 1.0)):
    obs = Obstacle(center, d, scaling, order)
    return obs, Workspace(bounds=((-50, 50), (-50, 50)), obstacles=(obs,), destination=(40.0, 40.0))


def test_scaled_distance_examples():
    o2 = Obstacle((1.0, 2.0), 1.0, norm_order=2)
    oi = Obstacle((1.0, 2.0), 1.0)
    assert scaled_distance(np.array([1.0, 2.0]), o2) == 0.0
    assert scaled_distance(np.array([4.0, 6.0]), o2) == pytest.approx(5.0)
    assert scaled_distance(np.array([4.0, 6.0]), oi) == pytest.approx(4.0)


def test_scaled_distance_uses_scaling():
    obs = Obstacle((0.0, 0.0), 1.0, (2.0, 0.5), 2)
    assert scaled_distance(np.array([1.0, 2.0]), obs) == pytest.approx(math.hypot(2.0, 1.0))


@given(point, point, point)
def test_scaled_distance_translation_invariant(p, q, shift):
    for order in (2, math.inf):
        a = Obstacle(tuple(q), 1.0, (1.5, 0.7), order)
        b = Obstacle(tuple(q + shift), 1.0, (1.5, 0.7), order)
        assert scaled_distance(p, a) == pytest.approx(scaled_distance(p + shift, b), abs=1e-9)


@given(point, point)
def test_scaled_distance_zero_only_at_center(p, q):
    obs = Obstacle(tuple(q), 1.0, norm_order=2)
    d = scaled_distance(p, obs)
    assert d >= 0
    assert (d == 0) == bool(np.all(p == q))


def test_barrier_examples():
    obs, ws = one()
    x = np.array([2.0, 0.0, 0.0, 2.0, 0.0])  # both agents 1 beyond the safety distance
    assert barrier_cost(x, ws, 0.5) == pytest.approx(0.0, abs=1e-15)
    x = np.array([1.5, 0.0, 0.0, 2.0, 0.0])
    assert barrier_cost(x, ws, 0.5) == pytest.approx(0.34657, abs=1e-5)
    x = np.array([1.0, 0.0, 0.0, 2.0, 0.0])
    assert barrier_cost(x, ws, 0.5) == BARRIER_VIOLATED
    assert barrier_cost(np.array([0.2, 0.3, 5.0, 5.0, 0.0]), ws, 0.5) == BARRIER_VIOLATED


@given(st.floats(1e-3, 5.0), st.floats(1e-3, 5.0))
def test_barrier_decreasing_in_distance(g1, g2):
    _, ws = one(order=2)
    lo, hi = sorted((g1, g2))
    x_lo = np.array([1.0 + lo, 0.0, 0.0, 3.0, 0.0])
    x_hi = np.array([1.0 + hi, 0.0, 0.0, 3.0, 0.0])
    if hi > lo:
        assert barrier_cost(x_hi, ws, 0.5) < barrier_cost(x_lo, ws, 0.5)


def test_barrier_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    ws = default_workspace()
    n = 0
    while n < 20:
        x = np.append(rng.uniform(0, 10, 4), rng.uniform(-3, 3))
        if not np.all(clearances(x[[0, 1, 2, 3]].reshape(2, 2), ws) > 0.05):
            continue
        fd = central_diff(lambda z: barrier_cost(z, ws, 0.5), x)
        assert rel_err(barrier_grad(x, ws, 0.5), fd) < 1e-6
        n += 1


@pytest.mark.parametrize("order", [2, math.inf])
def test_scaled_distance_grad_matches_finite_differences(order):
    rng = np.random.default_rng(1)
    obs = Obstacle((1.0, -2.0), 1.0, (1.3, 0.6), order)
    for _ in range(20):
        p = rng.uniform(-5, 5, 2)
        fd = central_diff(lambda z: scaled_distance(z, obs), p)
        assert rel_err(scaled_distance_grad(p, obs), fd) < 1e-6


def test_sensing_examples():
    assert sensing_penalty(1.0) == 0.0
    assert sensing_penalty(1.5) == 0.0
    assert sensing_penalty(0.1) == pytest.approx(23.0259, abs=1e-4)
    assert sensing_penalty(0.0) == BARRIER_VIOLATED
    assert sensing_penalty(-0.3) == BARRIER_VIOLATED


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_sensing_monotone_nonnegative(a, b):
    lo, hi = sorted((a, b))
    assert sensing_penalty(lo) >= sensing_penalty(hi) >= 0.0


def test_sensing_continuous_at_one():
    assert sensing_penalty(1 - 1e-12) == pytest.approx(0.0, abs=1e-9)
    assert sensing_penalty(1 + 1e-12) == 0.0


def test_is_feasible_examples(ws):
    assert is_feasible(np.array([5.0, 5.0]), ws)
    for obs in ws.obstacles:
        assert not is_feasible(np.array(obs.center), ws)
    assert not is_feasible(np.array([-1.0, 5.0]), ws)


def test_destination_feasible(ws):
    assert is_feasible(np.array(ws.destination), ws)


def test_workspace_rejects_destination_in_obstacle():
    with pytest.raises(ValueError):
        Workspace(obstacles=(Obstacle((9.0, 9.0), 1.0),))
    with pytest.raises(ValueError):
        Workspace(destination=(11.0, 5.0))


def test_obstacle_validation():
    with pytest.raises(ValueError):
        Obstacle((0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        Obstacle((0.0, 0.0), 1.0, (1.0, -1.0))
    with pytest.raises(ValueError):
        Obstacle((0.0, 0.0), 1.0, norm_order=1)


def test_workspace_round_trip(ws):
    assert Workspace.from_dict(ws.to_dict()) == ws
    with pytest.raises(ValueError):
        Workspace.from_dict({**ws.to_dict(), "walls": []})
