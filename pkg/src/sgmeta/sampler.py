"""Best-response data generation with oversampling near obstacles."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import DT, U_MAX
from .env import Workspace, is_feasible, scaled_distance
from .follower import FollowerType, best_response_batch
from .net import Dataset

MAX_ATTEMPTS = 10_000
LEADER_RADIUS = 3.0
CSV_COLUMNS = ("pLx", "pLy", "pFx", "pFy", "phi", "uLx", "uLy", "vF", "wF")


class WorkspaceTooConstrained(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplePlan:
    k1: int
    k2: int
    band: float | None = None  # None: use the follower type's sensing band 1/c4

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError(f"sample counts must be nonnegative, got {self.k1}, {self.k2}")
        if self.band is not None and not self.band > 0:
            raise ValueError("band must be positive")

    @classmethod
    def from_total(cls, k: int, kappa: float, band: float | None = None) -> "SamplePlan":
        k2 = int(round(k / (1.0 + kappa)))
        return cls(k - k2, k2, band)

    @property
    def total(self) -> int:
        return self.k1 + self.k2

    @property
    def kappa(self) -> float:
        return self.k1 / self.k2 if self.k2 else float("inf")


def _headings(rng, n):
    # (-pi, pi]
    return np.pi - rng.uniform(0.0, 2 * np.pi, n)


def _rejection(draw, accept, n, rng):
    """Collect n points from draw(rng, m) that pass accept(points)."""
    out, have, attempts = [], 0, 0
    while have < n:
        m = max(2 * (n - have), 16)
        pts = draw(rng, m)
        attempts += m
        pts = pts[accept(pts)]
        out.append(pts)
        have += len(pts)
        if attempts > MAX_ATTEMPTS * max(n, 1) and have < n:
            raise WorkspaceTooConstrained(f"rejection sampling exceeded {MAX_ATTEMPTS} attempts per sample")
    return np.concatenate(out)[:n] if out else np.empty((0, 2))


def sample_flat_positions(ws: Workspace, n: int, rng) -> np.ndarray:
    return _rejection(lambda r, m: r.uniform(ws.low, ws.high, (m, 2)), lambda p: is_feasible(p, ws), n, rng)


def sample_near_positions(ws: Workspace, n: int, band: float, rng) -> np.ndarray:
    """Positions in the band d_j < dist_j <= d_j + band of a uniformly chosen obstacle."""
    if not ws.obstacles:
        raise WorkspaceTooConstrained("no obstacles to sample near")
    which = rng.integers(len(ws.obstacles), size=n)
    out = np.empty((n, 2))
    for j, obs in enumerate(ws.obstacles):
        idx = np.flatnonzero(which == j)
        if not len(idx):
            continue
        half = (obs.safety_dist + band) / np.asarray(obs.scaling)
        lo, hi = np.asarray(obs.center) - half, np.asarray(obs.center) + half

        def accept(p, obs=obs):
            d = scaled_distance(p, obs)
            return (d > obs.safety_dist) & (d <= obs.safety_dist + band) & is_feasible(p, ws)

        out[idx] = _rejection(lambda r, m: r.uniform(lo, hi, (m, 2)), accept, len(idx), rng)
    return out


def sample_leader_positions(ws: Workspace, follower_pos: np.ndarray, rng, radius: float = LEADER_RADIUS):
    """Uniform in the disk of given radius around each follower, resampled until feasible."""
    out = np.empty_like(follower_pos)
    todo = np.arange(len(follower_pos))
    attempts = 0
    while len(todo):
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, len(todo)))
        a = rng.uniform(0.0, 2 * np.pi, len(todo))
        cand = follower_pos[todo] + np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
        ok = is_feasible(cand, ws)
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise WorkspaceTooConstrained("no feasible leader position near the follower")
    return out


def sample_inputs(ftype: FollowerType, plan: SamplePlan, ws: Workspace, rng, *,
                  u_max: float = U_MAX, leader_radius: float = LEADER_RADIUS):
    """Unlabeled (states, leader controls): K1 flat-region rows then K2 near-obstacle rows."""
    band = plan.band if plan.band is not None else ftype.band
    pF = np.concatenate([sample_flat_positions(ws, plan.k1, rng),
                         sample_near_positions(ws, plan.k2, band, rng) if plan.k2 else np.empty((0, 2))])
    n = len(pF)
    phi = _headings(rng, n)
    pL = sample_leader_positions(ws, pF, rng, leader_radius)
    uL = rng.uniform(-u_max, u_max, (n, 2))
    return np.column_stack([pL, pF, phi]), uL


def sample_dataset(ftype: FollowerType, plan: SamplePlan, ws: Workspace, rng, *,
                   u_max: float = U_MAX, dt: float = DT, leader_radius: float = LEADER_RADIUS) -> Dataset:
    """Draw states per the plan and label them with the follower's exact best response."""
    states, uL = sample_inputs(ftype, plan, ws, rng, u_max=u_max, leader_radius=leader_radius)
    if not len(states):
        return Dataset(states, uL, np.empty((0, 2)))
    return Dataset(states, uL, best_response_batch(states, uL, ftype, ws, dt))


def split(data: Dataset, fraction: float) -> tuple[Dataset, Dataset]:
    """First round(fraction * N) samples for training, the rest for testing."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * len(data)))
    if n_train == 0 or n_train == len(data):
        raise ValueError(f"split of {len(data)} samples at {fraction} leaves an empty part")
    return data[:n_train], data[n_train:]


@dataclass(frozen=True)
class SamplePool:
    """Pre-labeled flat-region and near-obstacle samples for one follower type.

    Training loops draw fresh batches from here instead of calling the
    oracle every iteration.
    """

    ftype: FollowerType
    flat: Dataset
    near: Dataset

    def draw(self, plan: SamplePlan, rng) -> Dataset:
        if plan.k1 > len(self.flat) or plan.k2 > len(self.near):
            raise ValueError(f"pool ({len(self.flat)}, {len(self.near)}) too small for plan ({plan.k1}, {plan.k2})")
        i = rng.choice(len(self.flat), plan.k1, replace=False)
        j = rng.choice(len(self.near), plan.k2, replace=False)
        return Dataset.concat([self.flat[i], self.near[j]])

    @property
    def all(self) -> Dataset:
        return Dataset.concat([self.flat, self.near])


def build_pool(ftype: FollowerType, size: int, kappa: float, ws: Workspace, rng, **kw) -> SamplePool:
    plan = SamplePlan.from_total(size, kappa)
    data = sample_dataset(ftype, plan, ws, rng, **kw)
    return SamplePool(ftype, data[:plan.k1], data[plan.k1:])


def save_csv(data: Dataset, path) -> None:
    np.savetxt(path, data.as_array(), delimiter=",", header=",".join(CSV_COLUMNS), comments="", fmt="%.17g")


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2).reshape(-1, len(CSV_COLUMNS))
    return Dataset(arr[:, 0:5], arr[:, 5:7], arr[:, 7:9])
