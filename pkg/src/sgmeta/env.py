"""Workspace geometry: obstacles, scaled distances, barrier and sensing costs.

Positions are numpy arrays whose last axis has length 2; every function here
broadcasts over leading axes so the oracle and planner can evaluate many
points at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Returned by the barrier-type costs when a point sits on or inside a
# safety boundary. Callers compare against it or simply let it propagate.
BARRIER_VIOLATED = math.inf


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    safety_dist: float
    scaling: tuple[float, float] = (1.0, 1.0)
    norm_order: float = math.inf

    def __post_init__(self):
        if not self.safety_dist > 0:
            raise ValueError(f"safety_dist must be positive, got {self.safety_dist}")
        if min(self.scaling) <= 0:
            raise ValueError(f"scaling components must be positive, got {self.scaling}")
        if self.norm_order not in (2, 2.0, math.inf):
            raise ValueError(f"norm_order must be 2 or inf, got {self.norm_order}")

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "safety_dist": self.safety_dist,
            "scaling": list(self.scaling),
            "norm_order": "inf" if math.isinf(self.norm_order) else 2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        order = d.get("norm_order", "inf")
        order = math.inf if order in ("inf", math.inf) else float(order)
        return cls(
            center=tuple(float(v) for v in d["center"]),
            safety_dist=float(d["safety_dist"]),
            scaling=tuple(float(v) for v in d.get("scaling", (1.0, 1.0))),
            norm_order=order,
        )


@dataclass(frozen=True)
class Workspace:
    bounds: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 10.0), (0.0, 10.0))
    obstacles: tuple[Obstacle, ...] = field(default_factory=tuple)
    destination: tuple[float, float] = (9.0, 9.0)
    goal_radius: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not in_bounds(np.asarray(self.destination, dtype=float), self):
            raise ValueError(f"destination {self.destination} lies outside the bounds")
        for obs in self.obstacles:
            if scaled_distance(np.asarray(self.destination, dtype=float), obs) <= obs.safety_dist:
                raise ValueError(f"destination lies inside the safety region of {obs}")
        if not self.goal_radius > 0:
            raise ValueError("goal_radius must be positive")

    @property
    def low(self) -> np.ndarray:
        return np.array([self.bounds[0][0], self.bounds[1][0]])

    @property
    def high(self) -> np.ndarray:
        return np.array([self.bounds[0][1], self.bounds[1][1]])

    def to_dict(self) -> dict:
        return {
            "bounds": [list(self.bounds[0]), list(self.bounds[1])],
            "obstacles": [o.to_dict() for o in self.obstacles],
            "destination": list(self.destination),
            "goal_radius": self.goal_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Workspace":
        unknown = set(d) - {"bounds", "obstacles", "destination", "goal_radius"}
        if unknown:
            raise ValueError(f"unknown workspace keys: {sorted(unknown)}")
        base = cls(obstacles=())
        bounds = d.get("bounds", base.bounds)
        return cls(
            bounds=(tuple(map(float, bounds[0])), tuple(map(float, bounds[1]))),
            obstacles=tuple(Obstacle.from_dict(o) for o in d.get("obstacles", [])),
            destination=tuple(float(v) for v in d.get("destination", base.destination)),
            goal_radius=float(d.get("goal_radius", base.goal_radius)),
        )


def default_workspace() -> Workspace:
    """The four-rectangle layout on [0, 10]^2 with destination [9, 9]."""
    centers = [(3.0, 2.5), (2.5, 7.0), (6.5, 5.5), (8.5, 2.0)]
    return Workspace(obstacles=tuple(Obstacle(c, 1.0) for c in centers))


def scaled_distance(p, obs: Obstacle):
    """||scaling * (p - center)|| in the obstacle's norm. Broadcasts over p."""
    diff = (np.asarray(p, dtype=float) - obs.center) * obs.scaling
    if math.isinf(obs.norm_order):
        return np.max(np.abs(diff), axis=-1)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def scaled_distance_grad(p, obs: Obstacle):
    """Gradient of scaled_distance with respect to p.

    For the max-norm the subgradient of the active (largest) component is
    used; ties pick the first axis. At the center the gradient is zero.
    """
    p = np.asarray(p, dtype=float)
    diff = (p - obs.center) * obs.scaling
    lam = np.asarray(obs.scaling, dtype=float)
    if math.isinf(obs.norm_order):
        ad = np.abs(diff)
        first = ad[..., 0] >= ad[..., 1]
        g = np.zeros_like(diff)
        g[..., 0] = np.where(first, np.sign(diff[..., 0]) * lam[0], 0.0)
        g[..., 1] = np.where(first, 0.0, np.sign(diff[..., 1]) * lam[1])
        return g
    n = np.sqrt(np.sum(diff * diff, axis=-1, keepdims=True))
    safe = np.where(n > 0, n, 1.0)
    return np.where(n > 0, diff * lam / safe, 0.0)


def clearances(p, ws: Workspace):
    """scaled_distance - safety_dist for every obstacle; shape p.shape[:-1] + (M,)."""
    p = np.asarray(p, dtype=float)
    if not ws.obstacles:
        return np.zeros(p.shape[:-1] + (0,))
    return np.stack([scaled_distance(p, o) - o.safety_dist for o in ws.obstacles], axis=-1)


def barrier_cost(x, ws: Workspace, nu: float) -> float:
    """Log barrier over both agents and all obstacles for a joint state x.

    Returns BARRIER_VIOLATED when either agent is on or inside a safety
    boundary.
    """
    x = np.asarray(x, dtype=float)
    gaps = clearances(np.stack([x[..., 0:2], x[..., 2:4]], axis=-2), ws)
    if np.any(gaps <= 0):
        return BARRIER_VIOLATED
    return float(-nu * np.sum(np.log(gaps)))


def barrier_grad(x, ws: Workspace, nu: float) -> np.ndarray:
    """Gradient of barrier_cost with respect to the 5-vector joint state."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(5)
    for obs in ws.obstacles:
        for sl in (slice(0, 2), slice(2, 4)):
            gap = scaled_distance(x[sl], obs) - obs.safety_dist
            g[sl] += -nu / gap * scaled_distance_grad(x[sl], obs)
    return g


def sensing_penalty(arg):
    """-10 ln(arg) on (0, 1], zero above 1, BARRIER_VIOLATED at or below 0."""
    a = np.asarray(arg, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 1.0, 0.0, -10.0 * np.log(np.where(a > 0, a, 1.0)))
    out = np.where(a <= 0, BARRIER_VIOLATED, out)
    return float(out) if out.ndim == 0 else out


def in_bounds(p, ws: Workspace):
    p = np.asarray(p, dtype=float)
    return np.all((p >= ws.low) & (p <= ws.high), axis=-1)


def is_feasible(p, ws: Workspace):
    """Inside the bounds and strictly outside every safety region."""
    ok = in_bounds(p, ws) & np.all(clearances(p, ws) > 0, axis=-1)
    return bool(ok) if np.ndim(ok) == 0 else ok


def is_safe(p, ws: Workspace):
    """Strictly outside every safety region; bounds are not checked."""
    ok = np.all(clearances(p, ws) > 0, axis=-1)
    return bool(ok) if np.ndim(ok) == 0 else ok
