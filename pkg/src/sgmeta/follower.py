"""Ground-truth follower model: typed one-step cost and its exact minimizer.

The follower is myopic. Given the joint state and the leader's announced
velocity it predicts both agents one step ahead and picks the control in
[-1, 1]^2 minimizing

    c1 |pF+ - pd|^2 + c2 |pL+ - pF+|^2 + c3 |uF|^2 + sum_j h(c4 (dist_j(pF+) - d_j))

where h is the sensing penalty from :mod:`sgmeta.env`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import DT, FOLLOWER, follower_step
from .env import BARRIER_VIOLATED, Workspace, clearances

GRID_SIZE = 41
REFINE_MAX_ITER = 200
REFINE_MIN_STEP = 1e-5
FD_STEP = 1e-4  # gradient and Hessian stencil
N_STARTS = 4  # refined coarse-grid local minima per query
WINDOW, WINDOW_STEP = 10, 0.01  # fine 21x21 window walked from each start
_CHUNK = 256


class FollowerTrapped(RuntimeError):
    """Every candidate control drives the follower into a safety region."""


@dataclass(frozen=True)
class FollowerType:
    id: int
    c: tuple[float, float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        if len(self.c) != 4 or min(self.c) <= 0:
            raise ValueError(f"type {self.id}: cost weights must be 4 positive numbers, got {self.c}")

    def scaled(self, s: float) -> "FollowerType":
        return FollowerType(self.id, tuple(s * v for v in self.c))

    @property
    def band(self) -> float:
        """Width of the band around an obstacle where sensing is active."""
        return 1.0 / self.c[3]


# careful: 2, 3; aggressive: 4, 5
DEFAULT_TYPES = (
    FollowerType(1, (1.0, 8.0, 1.0, 0.8)),
    FollowerType(2, (1.0, 10.0, 2.0, 0.7)),
    FollowerType(3, (1.0, 10.0, 2.0, 0.6)),
    FollowerType(4, (1.0, 5.0, 0.5, 1.0)),
    FollowerType(5, (1.0, 5.0, 0.3, 1.2)),
)
DEFAULT_PROBS = (0.2, 0.3, 0.1, 0.3, 0.1)


@dataclass(frozen=True)
class TypeDistribution:
    types: tuple[FollowerType, ...] = DEFAULT_TYPES
    probs: tuple[float, ...] = DEFAULT_PROBS

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.types) != len(self.probs) or not self.types:
            raise ValueError("types and probs must be non-empty and of equal length")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"probs must be nonnegative and sum to 1, got {self.probs}")
        ids = [t.id for t in self.types]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate type ids: {ids}")

    def by_id(self, type_id: int) -> FollowerType:
        for t in self.types:
            if t.id == type_id:
                return t
        raise KeyError(f"unknown follower type {type_id}; known: {[t.id for t in self.types]}")

    def to_dict(self) -> dict:
        return {"types": [{"id": t.id, "c": list(t.c)} for t in self.types], "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "TypeDistribution":
        unknown = set(d) - {"types", "probs"}
        if unknown:
            raise ValueError(f"unknown follower_types keys: {sorted(unknown)}")
        types = DEFAULT_TYPES
        if "types" in d:
            types = tuple(FollowerType(int(t["id"]), tuple(t["c"])) for t in d["types"])
        return cls(types, tuple(d.get("probs", DEFAULT_PROBS)))


def sample_type(dist: TypeDistribution, rng: np.random.Generator) -> FollowerType:
    return dist.types[rng.choice(len(dist.types), p=dist.probs)]


def follower_cost(uF, x, uL, ftype: FollowerType, ws: Workspace, dt: float = DT, guidance: bool = True):
    """One-step follower cost; broadcasts over leading axes of uF, x and uL.

    With ``guidance=False`` the leader term is dropped and x's leader
    entries and uL are never read.
    """
    c1, c2, c3, c4 = ftype.c
    uF = np.asarray(uF, dtype=float)
    x = np.asarray(x, dtype=float)
    nxt = follower_step(x[..., FOLLOWER], uF, dt)
    pF = nxt[..., 0:2]
    cost = c1 * np.sum((pF - ws.destination) ** 2, axis=-1) + c3 * np.sum(uF * uF, axis=-1)
    if guidance:
        pL = x[..., 0:2] + np.asarray(uL, dtype=float) * dt
        cost = cost + c2 * np.sum((pL - pF) ** 2, axis=-1)
    if ws.obstacles:
        cost = cost + _sensing(c4 * clearances(pF, ws))
    return float(cost) if np.ndim(cost) == 0 else cost


def _sensing(args):
    """Sum over the last axis of the sensing penalty, inf if any arg <= 0."""
    with np.errstate(divide="ignore"):
        terms = np.where(args < 1.0, -10.0 * np.log(np.clip(args, 0.0, 1.0)), 0.0)
    return np.sum(terms, axis=-1)


def _grid(n: int) -> np.ndarray:
    g = np.linspace(-1.0, 1.0, n)
    v, w = np.meshgrid(g, g, indexing="ij")
    return np.stack([v.ravel(), w.ravel()], axis=-1)


def grid_minimum(x, uL, ftype, ws, n=GRID_SIZE, dt=DT, guidance=True):
    """Exhaustive n-by-n grid search; returns (argmin controls, min costs) per query."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    shape = X.shape[:-1] + (2,)
    UL = np.zeros(shape) if uL is None else np.broadcast_to(np.asarray(uL, dtype=float), shape)
    G = _grid(n)
    best_u = np.empty((len(X), 2))
    best_f = np.empty(len(X))
    chunk = max(1, (_CHUNK * 1681) // len(G))
    for s in range(0, len(X), chunk):
        costs = follower_cost(G[None], X[s:s + chunk, None], UL[s:s + chunk, None], ftype, ws, dt, guidance)
        k = np.argmin(costs, axis=1)
        best_u[s:s + chunk] = G[k]
        best_f[s:s + chunk] = costs[np.arange(len(k)), k]
    return best_u, best_f


def _workspace_arrays(ws: Workspace):
    m = len(ws.obstacles)
    centers = np.array([o.center for o in ws.obstacles], dtype=float).reshape(m, 2)
    scaling = np.array([o.scaling for o in ws.obstacles], dtype=float).reshape(m, 2)
    dists = np.array([o.safety_dist for o in ws.obstacles], dtype=float)
    inf_norm = np.array([np.isinf(o.norm_order) for o in ws.obstacles], dtype=np.bool_)
    return centers, scaling, dists, inf_norm, np.asarray(ws.destination, dtype=float)


@njit(cache=True)
def _cost_given_heading(v, w, cs, sn, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt):
    px = x[2] + v * cs * dt
    py = x[3] + v * sn * dt
    f = c[0] * ((px - dest[0]) ** 2 + (py - dest[1]) ** 2) + c[2] * (v * v + w * w)
    if guidance:
        lx = x[0] + ul[0] * dt
        ly = x[1] + ul[1] * dt
        f += c[1] * ((lx - px) ** 2 + (ly - py) ** 2)
    for j in range(centers.shape[0]):
        dx = (px - centers[j, 0]) * scaling[j, 0]
        dy = (py - centers[j, 1]) * scaling[j, 1]
        if inf_norm[j]:
            d = max(abs(dx), abs(dy))
        else:
            d = np.sqrt(dx * dx + dy * dy)
        a = c[3] * (d - dists[j])
        if a <= 0.0:
            return np.inf
        if a < 1.0:
            f -= 10.0 * np.log(a)
    return f


@njit(cache=True)
def _point_cost(v, w, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt):
    phi = x[4] + w * dt
    return _cost_given_heading(v, w, np.cos(phi), np.sin(phi), x, ul, c, guidance,
                               centers, scaling, dists, inf_norm, dest, dt)


@njit(cache=True)
def _refine(bv, bw, bf, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt, step, max_iter, min_step, h):
    cand = np.empty((11, 2))
    dv, dw = 0.0, 0.0
    for _ in range(max_iter):
        if step < min_step:
            break
        f0 = bf
        fpv = _point_cost(bv + h, bw, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fmv = _point_cost(bv - h, bw, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fpw = _point_cost(bv, bw + h, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fmw = _point_cost(bv, bw - h, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fpp = _point_cost(bv + h, bw + h, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fpm = _point_cost(bv + h, bw - h, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fmp = _point_cost(bv - h, bw + h, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        fmm = _point_cost(bv - h, bw - h, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
        gv = (fpv - fmv) / (2 * h)
        gw = (fpw - fmw) / (2 * h)
        hvv = (fpv - 2 * f0 + fmv) / (h * h)
        hww = (fpw - 2 * f0 + fmw) / (h * h)
        hvw = (fpp - fpm - fmp + fmm) / (4 * h * h)
        if not (np.isfinite(gv) and np.isfinite(gw)):
            gv, gw = 0.0, 0.0
            hvv, hww, hvw = 0.0, 0.0, 0.0
        gn = np.sqrt(gv * gv + gw * gw)
        if gn > 0:
            cand[0, 0], cand[0, 1] = bv - step * gv / gn, bw - step * gw / gn
        else:
            cand[0, 0], cand[0, 1] = bv, bw
        det = hvv * hww - hvw * hvw
        if hvv > 0 and det > 0:
            cand[5, 0] = bv - (hww * gv - hvw * gw) / det
            cand[5, 1] = bw - (hvv * gw - hvw * gv) / det
        else:
            cand[5, 0], cand[5, 1] = bv, bw
        cand[1, 0], cand[1, 1] = bv + step, bw
        cand[2, 0], cand[2, 1] = bv, bw + step
        cand[3, 0], cand[3, 1] = bv - step, bw
        cand[4, 0], cand[4, 1] = bv, bw - step
        r = step * np.sqrt(0.5)
        cand[6, 0], cand[6, 1] = bv + r, bw + r
        cand[7, 0], cand[7, 1] = bv + r, bw - r
        cand[8, 0], cand[8, 1] = bv - r, bw + r
        cand[9, 0], cand[9, 1] = bv - r, bw - r
        # pattern move: repeat the last accepted displacement (follows kinked valleys)
        cand[10, 0], cand[10, 1] = bv + dv, bw + dw
        mv, mw, mf = bv, bw, bf
        for k in range(11):
            cv = min(1.0, max(-1.0, cand[k, 0]))
            cw = min(1.0, max(-1.0, cand[k, 1]))
            f = _point_cost(cv, cw, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
            if f < mf:
                mv, mw, mf = cv, cw, f
        if mf < bf:
            dv, dw = mv - bv, mw - bw
            bv, bw, bf = mv, mw, mf
            step = min(2.0 * step, 0.25)
        else:
            step *= 0.5
    return bv, bw, bf


@njit(cache=True)
def _grid_starts(F, n_starts):
    """Indices of the lowest finite local minima of a cost grid (3x3 neighbourhoods)."""
    n = F.shape[0]
    idx = np.argsort(F.ravel())
    starts = np.empty(n_starts, dtype=np.int64)
    m = 0
    for k in idx:
        if m >= n_starts:
            break
        b, a = k // n, k % n
        f = F[b, a]
        if not np.isfinite(f):
            break
        is_min = True
        for db in range(-1, 2):
            for da in range(-1, 2):
                bb, aa = b + db, a + da
                if 0 <= bb < n and 0 <= aa < n and F[bb, aa] < f:
                    is_min = False
        if is_min or m == 0:
            starts[m] = k
            m += 1
    return starts[:m]


@njit(cache=True)
def _solve(X, UL, c, guidance, centers, scaling, dists, inf_norm, dest, dt, n_grid, max_iter, min_step, h,
           n_starts):
    n = X.shape[0]
    out = np.empty((n, 2))
    trapped = np.zeros(n, dtype=np.bool_)
    grid = np.linspace(-1.0, 1.0, n_grid)
    F = np.empty((n_grid, n_grid))
    for i in range(n):
        x = X[i]
        ul = UL[i]
        for b in range(n_grid):
            phi = x[4] + grid[b] * dt
            cs, sn = np.cos(phi), np.sin(phi)
            for a in range(n_grid):
                F[b, a] = _cost_given_heading(grid[a], grid[b], cs, sn, x, ul, c, guidance,
                                              centers, scaling, dists, inf_norm, dest, dt)
        starts = _grid_starts(F, n_starts)
        if len(starts) == 0:
            trapped[i] = True
            out[i, 0] = 0.0
            out[i, 1] = 0.0
            continue
        bv, bw, bf = 0.0, 0.0, np.inf
        for k in starts:
            b, a = k // n_grid, k % n_grid
            # walk a fine window until its centre is the best point, then descend from there
            sv, sw, sf = grid[a], grid[b], F[b, a]
            for _ in range(max_iter):
                ov, ow = sv, sw
                for p in range(-WINDOW, WINDOW + 1):
                    for q in range(-WINDOW, WINDOW + 1):
                        cv = min(1.0, max(-1.0, ov + p * WINDOW_STEP))
                        cw = min(1.0, max(-1.0, ow + q * WINDOW_STEP))
                        f = _point_cost(cv, cw, x, ul, c, guidance, centers, scaling, dists, inf_norm, dest, dt)
                        if f < sf:
                            sv, sw, sf = cv, cw, f
                if sv == ov and sw == ow:
                    break
            v, w, f = _refine(sv, sw, sf, x, ul, c, guidance, centers, scaling, dists, inf_norm,
                              dest, dt, WINDOW_STEP, max_iter, min_step, h)
            if f < bf:
                bv, bw, bf = v, w, f
        out[i, 0] = bv
        out[i, 1] = bw
    return out, trapped


def best_response_batch(x, uL, ftype: FollowerType, ws: Workspace, dt: float = DT, guidance: bool = True):
    """Minimize the follower cost for many queries at once.

    Coarse 41x41 grid. From each of its (up to four) lowest local minima a
    21x21 window of spacing 0.01 is scanned and recentred on its best point
    until that point stops moving. A projected descent then starts from
    there, and the best result over the starts is kept. Each iteration
    tries the normalized negative finite-difference gradient, the eight
    compass and diagonal moves, a repeat of the last accepted move and
    (where the finite-difference Hessian is positive definite) a Newton
    step, all clipped to the box. An improvement doubles
    the step, a failure halves it. Stops once the step falls below 1e-5 or
    after 200 iterations. Several starts matter where the sensing penalty's
    kink (c4 * gap = 1) holds a chain of shallow local minima. The result
    never costs more than the best grid point.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    if uL is None:
        UL = np.zeros((len(X), 2))
    else:
        UL = np.ascontiguousarray(np.broadcast_to(np.asarray(uL, dtype=float), (len(X), 2)))
    u, trapped = _solve(X, UL, np.asarray(ftype.c, dtype=float), guidance, *_workspace_arrays(ws), dt,
                        GRID_SIZE, REFINE_MAX_ITER, REFINE_MIN_STEP, FD_STEP, N_STARTS)
    if trapped.any():
        bad = int(np.flatnonzero(trapped)[0])
        raise FollowerTrapped(f"follower trapped at state {X[bad].tolist()}")
    return u


def best_response(x, uL, ftype: FollowerType, ws: Workspace, dt: float = DT) -> np.ndarray:
    """The follower's optimal reply to leader velocity uL at joint state x."""
    return best_response_batch(np.asarray(x, dtype=float)[None], np.asarray(uL, dtype=float)[None], ftype, ws, dt)[0]


def myopic_policy(x, ftype: FollowerType, ws: Workspace, dt: float = DT) -> np.ndarray:
    """Best response with the guidance term removed; ignores every leader quantity."""
    x = np.array(x, dtype=float)
    x[..., 0:2] = 0.0
    return best_response_batch(x[None], None, ftype, ws, dt, guidance=False)[0]


def exhaustive_best_response(x, uL, ftype, ws, n=201, dt=DT, guidance=True):
    """Reference answer from a dense n-by-n grid; used as a test oracle."""
    u, f = grid_minimum(np.asarray(x, dtype=float)[None], None if uL is None else np.asarray(uL, dtype=float)[None],
                        ftype, ws, n, dt, guidance)
    return u[0], float(f[0])


__all__ = [
    "BARRIER_VIOLATED", "DEFAULT_PROBS", "DEFAULT_TYPES", "FollowerTrapped", "FollowerType",
    "TypeDistribution", "best_response", "best_response_batch", "exhaustive_best_response",
    "follower_cost", "grid_minimum", "myopic_policy", "sample_type",
]
