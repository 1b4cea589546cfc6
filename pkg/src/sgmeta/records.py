"""CSV readers and writers for trajectories and loss traces."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .planner import Trajectory

TRAJECTORY_COLUMNS = ("t", "pLx", "pLy", "pFx", "pFy", "phi", "uLx", "uLy", "vF", "wF", "stage_cost", "reason")
REASONS = ("reached", "timeout", "trapped")


def _fmt(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def save_trajectory(traj: Trajectory, path) -> None:
    """One row per recorded state; controls and cost of the final row are blank."""
    n = traj.steps
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TRAJECTORY_COLUMNS)
        for t, x in enumerate(traj.states):
            if t < n:
                ctrl = [*traj.leader_controls[t], *traj.follower_controls[t], traj.stage_costs[t]]
            else:
                ctrl = [math.nan] * 5
            out.writerow([t, *map(_fmt, x), *map(_fmt, ctrl), traj.reason if t == n else ""])


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(TRAJECTORY_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no trajectory rows")
    arr = np.array([[float(v) if v else math.nan for v in r[1:11]] for r in body])
    reason = body[-1][11]
    if reason not in REASONS:
        raise ValueError(f"{path}: last row must carry a reason in {REASONS}, got {reason!r}")
    n = len(body) - 1
    return Trajectory(arr[:, 0:5], arr[:n, 5:7], arr[:n, 7:9], arr[:n, 9], reason)


def save_loss_trace(trace, path, columns=("iteration", "loss")) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(columns)
        for row in trace:
            out.writerow([row[0], *(repr(float(v)) for v in row[1:])])


def load_loss_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
