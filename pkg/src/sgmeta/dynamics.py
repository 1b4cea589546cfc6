"""Discrete-time motion models.

A joint state is a length-5 array ``[pLx, pLy, pFx, pFy, phi]``; leader
controls are velocities ``[vx, vy]`` and follower controls are
``[speed, turn_rate]``. All functions broadcast over leading axes and return
new arrays.
"""
from __future__ import annotations

import numpy as np

DT = 0.2
U_MAX = 2.0

LEADER = slice(0, 2)
FOLLOWER = slice(2, 5)
FOLLOWER_POS = slice(2, 4)
HEADING = 4


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


def joint_state(leader_pos, follower_pos, heading) -> np.ndarray:
    return np.array([*leader_pos, *follower_pos, wrap_angle(heading)], dtype=float)


def leader_step(xL, uL, dt: float = DT) -> np.ndarray:
    return np.asarray(xL, dtype=float) + np.asarray(uL, dtype=float) * dt


def follower_step(xF, uF, dt: float = DT) -> np.ndarray:
    """Unicycle step that turns first, then drives along the new heading."""
    xF = np.asarray(xF, dtype=float)
    uF = np.asarray(uF, dtype=float)
    v, w = uF[..., 0], uF[..., 1]
    phi = xF[..., 2] + w * dt
    out = np.empty(np.broadcast_shapes(xF.shape, uF.shape[:-1] + (3,)))
    out[..., 0] = xF[..., 0] + v * np.cos(phi) * dt
    out[..., 1] = xF[..., 1] + v * np.sin(phi) * dt
    out[..., 2] = wrap_angle(phi)
    return out


def follower_step_jacobians(xF, uF, dt: float = DT):
    """Jacobians of follower_step with respect to the state and the control.

    Returns ``(A, B)`` with shapes ``(..., 3, 3)`` and ``(..., 3, 2)``. The
    heading wrap is treated as the identity (it is, away from the cut).
    """
    xF = np.asarray(xF, dtype=float)
    uF = np.asarray(uF, dtype=float)
    v, w = uF[..., 0], uF[..., 1]
    phi = xF[..., 2] + w * dt
    c, s = np.cos(phi), np.sin(phi)
    shape = np.broadcast_shapes(xF.shape[:-1], uF.shape[:-1])
    A = np.zeros(shape + (3, 3))
    A[..., 0, 0] = 1.0
    A[..., 1, 1] = 1.0
    A[..., 2, 2] = 1.0
    A[..., 0, 2] = -v * s * dt
    A[..., 1, 2] = v * c * dt
    B = np.zeros(shape + (3, 2))
    B[..., 0, 0] = c * dt
    B[..., 1, 0] = s * dt
    B[..., 0, 1] = -v * s * dt * dt
    B[..., 1, 1] = v * c * dt * dt
    B[..., 2, 1] = dt
    return A, B


def joint_step(x, uL, uF, dt: float = DT) -> np.ndarray:
    """Advance both agents one step. The follower ignores the leader's state."""
    x = np.asarray(x, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape, np.shape(uL)[:-1] + (5,)))
    out[..., LEADER] = leader_step(x[..., LEADER], uL, dt)
    out[..., FOLLOWER] = follower_step(x[..., FOLLOWER], uF, dt)
    return out


def clip_leader(uL, u_max: float = U_MAX) -> np.ndarray:
    return np.clip(uL, -u_max, u_max)


def clip_follower(uF) -> np.ndarray:
    return np.clip(uF, -1.0, 1.0)
