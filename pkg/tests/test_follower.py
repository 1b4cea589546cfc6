import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgmeta.env import Obstacle, Workspace
from sgmeta.follower import (DEFAULT_TYPES, FollowerTrapped, FollowerType, TypeDistribution, best_response,
                             best_response_batch, exhaustive_best_response, follower_cost, grid_minimum,
                             myopic_policy, sample_type)
from sgmeta.sampler import SamplePlan, sample_inputs

OPEN = Workspace()  # no obstacles


def test_cost_zero_at_destination():
    x = np.array([9.0, 9.0, 9.0, 9.0, 0.3])
    for t in DEFAULT_TYPES:
        assert follower_cost([0, 0], x, [0, 0], t, OPEN) == 0.0
    assert follower_cost([0, 1], x, [0, 0], DEFAULT_TYPES[0], OPEN) == pytest.approx(1.0)


def test_cost_term_by_term():
    t4 = DEFAULT_TYPES[3]
    x = np.array([0.2, 0.0, 0.0, 0.0, 0.0])
    # follower moves to [0.2, 0] and meets the static leader
    expected = 1.0 * (8.8 ** 2 + 9.0 ** 2) + 5.0 * 0.0 + 0.5 * 1.0
    assert follower_cost([1, 0], x, [0, 0], t4, OPEN) == pytest.approx(expected)


def test_cost_includes_sensing(ws):
    t = DEFAULT_TYPES[0]
    x = np.array([5.0, 0.5, 5.0, 0.5, 0.0])  # gap 1 to obstacle 1, outside every other band
    gap = 5.0 - 3.0 - 1.0
    sens = -10 * np.log(t.c[3] * gap)
    base = follower_cost([0, 0], x, [0, 0], t, OPEN)
    assert follower_cost([0, 0], x, [0, 0], t, ws) == pytest.approx(base + sens)


def test_cost_violation_signal(ws):
    x = np.array([5.0, 5.0, 4.1, 2.5, 0.0])  # 0.1 outside obstacle 1's safety region
    assert follower_cost([-1.0, 0.0], x, [0, 0], DEFAULT_TYPES[0], ws) == np.inf


def test_best_response_stays_at_destination():
    x = np.array([9.0, 9.0, 9.0, 9.0, 0.0])
    np.testing.assert_allclose(best_response(x, [0, 0], DEFAULT_TYPES[0], OPEN), [0, 0], atol=1e-4)


def test_best_response_full_speed_along_diagonal():
    ws = Workspace(bounds=((-10, 10), (-10, 10)))
    x = np.array([0.2 * np.sqrt(0.5), 0.2 * np.sqrt(0.5), 0.0, 0.0, np.pi / 4])
    u = best_response(x, [np.sqrt(0.5), np.sqrt(0.5)], DEFAULT_TYPES[3], ws)
    ref, _ = exhaustive_best_response(x, [np.sqrt(0.5), np.sqrt(0.5)], DEFAULT_TYPES[3], ws)
    assert u[0] > 0.95 and abs(u[1]) < 0.05
    np.testing.assert_allclose(u, ref, atol=0.01)


def test_best_response_never_worse_than_grid(ws):
    rng = np.random.default_rng(0)
    for t in DEFAULT_TYPES:
        states, uL = sample_inputs(t, SamplePlan(10, 10), ws, rng)
        u = best_response_batch(states, uL, t, ws)
        assert np.all(np.abs(u) <= 1)
        f = follower_cost(u, states, uL, t, ws)
        _, f_grid = grid_minimum(states, uL, t, ws)
        assert np.all(f <= f_grid + 1e-12)
        stay = follower_cost(np.zeros(2), states, uL, t, ws)
        assert np.all(f <= stay + 1e-12)


def test_best_response_close_to_fine_grid(ws):
    rng = np.random.default_rng(1)
    t = DEFAULT_TYPES[1]
    states, uL = sample_inputs(t, SamplePlan(5, 5), ws, rng)
    u = best_response_batch(states, uL, t, ws)
    for s, ul, ui in zip(states, uL, u):
        _, f_ref = exhaustive_best_response(s, ul, t, ws)
        assert follower_cost(ui, s, ul, t, ws) <= f_ref + 1e-3


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 10_000))
def test_best_response_scale_invariant_away_from_obstacles(s, seed):
    # scaling all c_i also rescales the sensing argument, so only the
    # obstacle-free objective is homogeneous
    rng = np.random.default_rng(seed)
    x = np.append(rng.uniform(0, 10, 4), rng.uniform(-np.pi, np.pi))
    uL = rng.uniform(-2, 2, 2)
    t = DEFAULT_TYPES[seed % 5]
    u1 = best_response(x, uL, t, OPEN)
    u2 = best_response(x, uL, t.scaled(s), OPEN)
    f = follower_cost(u2, x, uL, t, OPEN)
    assert f == pytest.approx(follower_cost(u1, x, uL, t, OPEN), rel=1e-8, abs=1e-8)


def test_myopic_stays_at_destination(ws):
    np.testing.assert_allclose(myopic_policy([0, 0, 9.0, 9.0, 1.0], DEFAULT_TYPES[4], ws), [0, 0], atol=1e-4)


def test_myopic_open_region_heads_to_destination(ws):
    x = np.array([0.0, 0.0, 5.0, 8.5, np.arctan2(0.5, 4.0)])
    u = myopic_policy(x, DEFAULT_TYPES[3], ws)
    ref, _ = exhaustive_best_response(x, None, DEFAULT_TYPES[3], ws, guidance=False)
    assert u[0] > 0.9
    np.testing.assert_allclose(u, ref, atol=0.01)


def test_myopic_stuck_at_flat_face():
    # facing a flat face with the destination straight behind it, at the gap
    # where the sensing slope balances the goal pull: any move costs more
    ws = Workspace(obstacles=(Obstacle((5.0, 5.0), 1.0),), destination=(5.0, 9.0))
    t = FollowerType(9, (1.0, 1.0, 1.0, 1.0))
    g = (-5 + np.sqrt(45)) / 2  # g (5 + g) = 5
    for px in (4.5, 5.0, 5.5):
        x = np.array([0.0, 0.0, px, 4.0 - g, np.pi / 2])
        np.testing.assert_allclose(myopic_policy(x, t, ws), [0, 0], atol=1e-6)
        ref, _ = exhaustive_best_response(x, None, t, ws, guidance=False)
        np.testing.assert_array_equal(ref, [0, 0])


def test_myopic_ignores_leader(ws):
    rng = np.random.default_rng(2)
    for t in DEFAULT_TYPES:
        x = np.array([1.0, 1.0, 5.0, 0.5, 0.3])
        base = myopic_policy(x, t, ws)
        for _ in range(5):
            y = x.copy()
            y[:2] = rng.uniform(0, 10, 2)
            np.testing.assert_array_equal(myopic_policy(y, t, ws), base)


def test_trapped_raises(ws):
    # inside a safety region every control, including staying, is infeasible
    with pytest.raises(FollowerTrapped):
        best_response(np.array([5.0, 5.0, 3.0, 2.5, 0.0]), [0, 0], DEFAULT_TYPES[0], ws)


def test_type_validation():
    with pytest.raises(ValueError):
        FollowerType(1, (1.0, 0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        TypeDistribution(probs=(0.5, 0.5, 0.0, 0.0, 0.1))
    with pytest.raises(KeyError):
        TypeDistribution().by_id(7)


def test_sample_type_degenerate_and_frequencies():
    rng = np.random.default_rng(0)
    d1 = TypeDistribution(probs=(1.0, 0.0, 0.0, 0.0, 0.0))
    assert all(sample_type(d1, rng).id == 1 for _ in range(50))
    d = TypeDistribution()
    ids = np.array([sample_type(d, rng).id for _ in range(100_000)])
    freq = np.bincount(ids, minlength=6)[1:] / len(ids)
    np.testing.assert_allclose(freq, d.probs, atol=0.01)


def test_sample_type_deterministic():
    d = TypeDistribution()
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [sample_type(d, r1).id for _ in range(20)] == [sample_type(d, r2).id for _ in range(20)]


def test_distribution_round_trip():
    d = TypeDistribution()
    assert TypeDistribution.from_dict(d.to_dict()) == d
