import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgmeta.dynamics import follower_step, follower_step_jacobians, joint_step, leader_step, wrap_angle

from .conftest import central_diff, rel_err

real = st.floats(-1e3, 1e3, allow_nan=False)
unit = st.floats(-1.0, 1.0)


def test_leader_step_examples():
    np.testing.assert_array_equal(leader_step([0, 0], [0, 0]), [0, 0])
    np.testing.assert_allclose(leader_step([0, 0], [1, 0], 0.2), [0.2, 0])
    np.testing.assert_allclose(leader_step([9, 9], [-1, -1], 0.2), [8.8, 8.8])


def test_follower_step_examples():
    np.testing.assert_array_equal(follower_step([0, 0, 0], [0, 0]), [0, 0, 0])
    np.testing.assert_allclose(follower_step([0, 0, 0], [1, 0], 0.2), [0.2, 0, 0])
    np.testing.assert_allclose(follower_step([0, 0, 0], [1, 1], 0.2), [0.196013, 0.039734, 0.2], atol=1e-6)


def test_joint_step_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0, 0.5])
    np.testing.assert_array_equal(joint_step(x, [0, 0], [0, 0]), x)
    uL, uF = np.array([0.3, -1.2]), np.array([0.7, -0.4])
    out = joint_step(x, uL, uF)
    np.testing.assert_array_equal(out[:2], leader_step(x[:2], uL))
    np.testing.assert_array_equal(out[2:], follower_step(x[2:], uF))
    wrapped = joint_step(np.array([0, 0, 0, 0, np.pi]), [0, 0], [0, 1.0])[4]
    assert wrapped == pytest.approx(-np.pi + 0.2)


@given(real)
def test_wrap_range(a):
    w = wrap_angle(a)
    assert -np.pi < w <= np.pi
    assert np.isclose(np.cos(w), np.cos(a), atol=1e-9) and np.isclose(np.sin(w), np.sin(a), atol=1e-9)


def test_wrap_half_open():
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi


@given(st.tuples(real, real), st.tuples(real, real), st.tuples(unit, unit))
def test_leader_linear(a, b, u):
    a, b, u = map(np.array, (a, b, u))
    np.testing.assert_allclose(leader_step(a + b, u) - leader_step(a, u), b, atol=1e-9)


@given(st.tuples(real, real, st.floats(-np.pi, np.pi)), st.tuples(unit, unit))
def test_follower_displacement_bounded(xF, uF):
    xF = np.array(xF)
    nxt = follower_step(xF, np.array(uF))
    assert np.hypot(*(nxt[:2] - xF[:2])) <= 0.2 + 1e-9
    assert -np.pi < nxt[2] <= np.pi


def test_no_input_mutation():
    x = np.array([1.0, 2.0, 3.0, 4.0, 0.5])
    uL, uF = np.array([1.0, 1.0]), np.array([1.0, 1.0])
    copies = x.copy(), uL.copy(), uF.copy()
    joint_step(x, uL, uF)
    for a, b in zip((x, uL, uF), copies):
        np.testing.assert_array_equal(a, b)


def test_follower_jacobians_match_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        xF = np.array([*rng.uniform(0, 10, 2), rng.uniform(-2.5, 2.5)])
        uF = rng.uniform(-1, 1, 2)
        A, B = follower_step_jacobians(xF, uF)
        assert rel_err(A, central_diff(lambda z: follower_step(z, uF), xF)) < 1e-7
        assert rel_err(B, central_diff(lambda z: follower_step(xF, z), uF)) < 1e-7
