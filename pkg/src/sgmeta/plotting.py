"""Diagnostic figures: workspaces with trajectories, adaptation curves and MSE bars."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Ellipse, Rectangle  # noqa: E402

from .env import Workspace, clearances  # noqa: E402
from .follower import FollowerType, _sensing  # noqa: E402
from .planner import Trajectory  # noqa: E402

LEADER_COLOR = "tab:blue"
FOLLOWER_COLOR = "tab:orange"


def sensing_field(ws: Workspace, ftype: FollowerType, n: int = 200):
    """Follower sensing cost on an n x n cell grid; cells inside safety regions are NaN."""
    xs = np.linspace(ws.low[0], ws.high[0], n)
    ys = np.linspace(ws.low[1], ws.high[1], n)
    P = np.stack(np.meshgrid(xs, ys), axis=-1)
    if not ws.obstacles:
        return xs, ys, np.zeros((n, n))
    cost = _sensing(ftype.c[3] * clearances(P, ws))
    return xs, ys, np.where(np.isfinite(cost), cost, np.nan)


def draw_workspace(ax, ws: Workspace, shading: FollowerType | None = None):
    if shading is not None:
        xs, ys, field = sensing_field(ws, shading)
        mesh = ax.imshow(field, origin="lower", extent=(xs[0], xs[-1], ys[0], ys[-1]), cmap="Greys",
                         alpha=0.6, interpolation="nearest")
        plt.colorbar(mesh, ax=ax, label="sensing cost")
    for obs in ws.obstacles:
        half = obs.safety_dist / np.asarray(obs.scaling)
        if obs.norm_order == np.inf:
            patch = Rectangle(np.asarray(obs.center) - half, 2 * half[0], 2 * half[1])
        else:
            patch = Ellipse(obs.center, 2 * half[0], 2 * half[1])
        patch.set(facecolor="0.35", edgecolor="k", alpha=0.8)
        ax.add_patch(patch)
    ax.add_patch(Circle(ws.destination, ws.goal_radius, facecolor="none", edgecolor="tab:green", ls="--"))
    ax.plot(*ws.destination, marker="*", color="tab:green", ms=12, ls="none", label="destination")
    ax.set_xlim(ws.low[0], ws.high[0])
    ax.set_ylim(ws.low[1], ws.high[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def plot_trajectory(traj: Trajectory, ws: Workspace, path, title: str = "",
                    shading: FollowerType | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    draw_workspace(ax, ws, shading)
    S = traj.states
    if np.any(np.isfinite(S[:, 0])):
        ax.plot(S[:, 0], S[:, 1], "-o", color=LEADER_COLOR, ms=2.5, lw=1.2, label="leader")
    ax.plot(S[:, 2], S[:, 3], "-s", color=FOLLOWER_COLOR, ms=2.5, lw=1.2, label="follower")
    ax.plot(S[0, 2], S[0, 3], "k^", ms=7, label="start")
    ax.set_title(title or f"{traj.reason} after {traj.steps} steps")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_adaptation_curves(curves: dict, path, title: str = "") -> None:
    """curves: label -> per-step losses (C + 1 values)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, losses in curves.items():
        ax.plot(np.arange(len(losses)), losses, label=label)
    ax.set_xlabel("adaptation step")
    ax.set_ylabel("MSE")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_mse_bars(table: dict, path, title: str = "") -> None:
    """table: model label -> {type id: MSE}; grouped bars per type."""
    labels = list(table)
    type_ids = sorted({k for v in table.values() for k in v})
    width = 0.8 / max(len(labels), 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, label in enumerate(labels):
        vals = [table[label].get(t, np.nan) for t in type_ids]
        ax.bar(np.arange(len(type_ids)) + (i - (len(labels) - 1) / 2) * width, vals, width, label=label)
    ax.set_xticks(np.arange(len(type_ids)), [f"type {t}" for t in type_ids])
    ax.set_ylabel("held-out MSE after adaptation")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_loss_trace(iters, losses, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, losses, lw=0.6)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
