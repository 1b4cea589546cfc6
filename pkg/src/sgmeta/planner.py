"""Leader-side trajectory optimization and the receding-horizon guidance loop.

A plan over ``T`` steps has leader controls ``U`` (T, 2) and follower
states ``XF`` (T, 3) for steps 1..T. Leader positions are eliminated through
the exact single-integrator rollout; the follower's learned dynamics are
enforced softly with a quadratic penalty of weight ``mu``. The result is
then refined with Pontryagin-style sweeps on the exactly rolled-out model.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dynamics import DT, U_MAX, follower_step, follower_step_jacobians, joint_step, wrap_angle
from .env import Workspace, clearances, is_feasible, is_safe, scaled_distance, scaled_distance_grad
from .follower import FollowerTrapped, FollowerType, best_response, follower_cost, myopic_policy
from .net import MlpParams, forward, forward_and_jacobian

log = logging.getLogger(__name__)


class InfeasibleStart(ValueError):
    pass


@dataclass(frozen=True)
class LeaderCostParams:
    Q1: np.ndarray = field(default_factory=lambda: 2.0 * np.eye(5))
    Q2: np.ndarray = field(default_factory=lambda: 5.0 * np.eye(2))
    R: np.ndarray = field(default_factory=lambda: np.eye(2))
    Qf1: np.ndarray | None = None
    Qf2: np.ndarray | None = None
    nu: float = 0.5
    mu: float = 50.0

    def __post_init__(self):
        for name, shape in (("Q1", (5, 5)), ("Q2", (2, 2)), ("R", (2, 2))):
            object.__setattr__(self, name, _psd(name, getattr(self, name), shape))
        object.__setattr__(self, "Qf1", _psd("Qf1", 5.0 * self.Q1 if self.Qf1 is None else self.Qf1, (5, 5)))
        object.__setattr__(self, "Qf2", _psd("Qf2", 5.0 * self.Q2 if self.Qf2 is None else self.Qf2, (2, 2)))
        if not (self.nu > 0 and self.mu > 0):
            raise ValueError("nu and mu must be positive")

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "LeaderCostParams":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown leader_cost keys: {sorted(unknown)}")
        return cls(**{k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in d.items()})


def _psd(name, m, shape):
    m = np.asarray(m, dtype=float)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if np.min(np.linalg.eigvalsh((m + m.T) / 2)) < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")
    return m


@dataclass(frozen=True)
class PlanConfig:
    horizon_steps: int = 10
    dt: float = DT
    u_max: float = U_MAX
    max_time_steps: int = 150
    ocp_iters: int = 200
    ocp_tol: float = 1e-4
    pmp_sweeps: int = 10
    pmp_tol: float = 1e-4
    hamiltonian_iters: int = 50
    leader_offset: tuple[float, float] = (0.5, 0.5)
    initial_heading: float = 0.0

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be at least 1")
        object.__setattr__(self, "leader_offset", tuple(self.leader_offset))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["leader_offset"] = list(self.leader_offset)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlanConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PlanResult:
    controls: np.ndarray        # (T, 2)
    predicted: np.ndarray       # (T + 1, 5), predicted[0] is the query state
    objective: float
    refined: bool = False
    iterations: int = 0
    # objective of the input controls under the model rollout (refinement only)
    initial_objective: float | None = None


@dataclass
class Trajectory:
    states: np.ndarray              # (n + 1, 5)
    leader_controls: np.ndarray     # (n, 2); NaN when there is no leader
    follower_controls: np.ndarray   # (n, 2)
    stage_costs: np.ndarray         # (n,)
    reason: str
    diagnostics: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.follower_controls)


def target_state(ws: Workspace) -> np.ndarray:
    return np.array([*ws.destination, *ws.destination, 0.0])


def _stage_terms(X, U, params: LeaderCostParams, xd):
    """Quadratic stage cost per row and its gradients w.r.t. X and U."""
    e = X - xd
    e[..., 4] = wrap_angle(e[..., 4])
    gap = X[..., 0:2] - X[..., 2:4]
    val = (np.einsum("...i,ij,...j->...", e, params.Q1, e)
           + np.einsum("...i,ij,...j->...", gap, params.Q2, gap)
           + np.einsum("...i,ij,...j->...", U, params.R, U))
    gx = e @ (params.Q1 + params.Q1.T)
    gg = gap @ (params.Q2 + params.Q2.T)
    gx[..., 0:2] += gg
    gx[..., 2:4] -= gg
    gu = U @ (params.R + params.R.T)
    return val, gx, gu


def _terminal_terms(x, params: LeaderCostParams, xd):
    e = x - xd
    e[4] = wrap_angle(e[4])
    gap = x[0:2] - x[2:4]
    val = e @ params.Qf1 @ e + gap @ params.Qf2 @ gap
    g = e @ (params.Qf1 + params.Qf1.T)
    gg = gap @ (params.Qf2 + params.Qf2.T)
    g[0:2] += gg
    g[2:4] -= gg
    return float(val), g


def leader_stage_cost(x, uL, params: LeaderCostParams, ws: Workspace) -> float:
    """|x - xd|^2_Q1 + |pL - pF|^2_Q2 + |uL|^2_R."""
    x = np.asarray(x, dtype=float)[None]
    return float(_stage_terms(x, np.asarray(uL, dtype=float)[None], params, target_state(ws))[0][0])


def leader_terminal_cost(x, params: LeaderCostParams, ws: Workspace) -> float:
    return _terminal_terms(np.asarray(x, dtype=float).copy(), params, target_state(ws))[0]


def _barrier_terms(P, ws: Workspace, nu: float):
    """Barrier sum over rows of P (..., 2) and obstacles, plus its gradient."""
    grad = np.zeros_like(P)
    if not ws.obstacles:
        return 0.0, grad
    gaps = clearances(P, ws)
    if np.any(gaps <= 0):
        return np.inf, grad
    for j, obs in enumerate(ws.obstacles):
        grad -= (nu / gaps[..., j])[..., None] * scaled_distance_grad(P, obs)
    return float(-nu * np.sum(np.log(gaps))), grad


def leader_positions(x0, U, dt):
    return x0[0:2] + dt * np.concatenate([np.zeros((1, 2)), np.cumsum(U, axis=0)])


def penalized_objective(U, XF, x0, w: MlpParams, params: LeaderCostParams, ws: Workspace,
                        dt: float = DT, grad: bool = False):
    """Penalized leader objective over leader controls and free follower states.

    Sum of stage costs and barriers for t < T, terminal cost and barrier at
    T, and mu |xF_{t+1} - fF(xF_t, b(x_t, u_t))|^2 for every step. Returns
    inf when any position touches a safety region. With ``grad=True``
    returns ``(value, dU, dXF)``.
    """
    U = np.asarray(U, dtype=float)
    XF = np.asarray(XF, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    T = len(U)
    xd = target_state(ws)
    X = np.empty((T + 1, 5))
    X[:, 0:2] = leader_positions(x0, U, dt)
    X[0, 2:5] = x0[2:5]
    X[1:, 2:5] = XF

    bar, bgrad = _barrier_terms(np.stack([X[:, 0:2], X[:, 2:4]], axis=1), ws, params.nu)
    if not np.isfinite(bar):
        return (np.inf, None, None) if grad else np.inf
    sval, sgx, sgu = _stage_terms(X[:-1].copy(), U, params, xd)
    tval, tg = _terminal_terms(X[-1].copy(), params, xd)

    if grad:
        b, jb = forward_and_jacobian(w, X[:-1], U)
    else:
        b = forward(w, X[:-1], U)
    pred = follower_step(X[:-1, 2:5], b, dt)
    r = XF - pred
    r[:, 2] = wrap_angle(r[:, 2])
    value = float(np.sum(sval) + tval + bar + params.mu * np.sum(r * r))
    if not grad:
        return value

    gX = np.zeros((T + 1, 5))
    gX[:-1] += sgx
    gX[-1] += tg
    gX[:, 0:2] += bgrad[:, 0]
    gX[:, 2:4] += bgrad[:, 1]
    gr = 2.0 * params.mu * r                                   # (T, 3)
    gX[1:, 2:5] += gr
    A, B = follower_step_jacobians(X[:-1, 2:5], b, dt)        # (T,3,3), (T,3,2)
    Bj = B @ jb                                                # (T, 3, 7)
    gX[:-1, 2:5] -= np.einsum("ti,tij->tj", gr, A)
    gX[:-1] -= np.einsum("ti,tij->tj", gr, Bj[:, :, :5])
    gU = sgu - np.einsum("ti,tij->tj", gr, Bj[:, :, 5:])
    # leader position at s depends on every control before s
    gU += dt * np.cumsum(gX[:0:-1, 0:2], axis=0)[::-1]
    return value, gU, gX[1:, 2:5]


def rollout(x0, U, w: MlpParams, dt: float = DT) -> np.ndarray:
    """Joint states (T + 1, 5) under leader controls U and follower model b."""
    X = np.empty((len(U) + 1, 5))
    X[0] = x0
    for t, u in enumerate(U):
        X[t + 1] = joint_step(X[t], u, forward(w, X[t], u), dt)
    return X


def _shifted(U, T):
    return np.concatenate([U[1:], U[-1:]])[:T]


def _fallbacks(warm, cfg: PlanConfig):
    out = [] if warm is None else [_shifted(warm, cfg.horizon_steps)]
    return out + [np.zeros((cfg.horizon_steps, 2))]


def _initial_guesses(x0, w, cfg: PlanConfig, warm_start):
    T = cfg.horizon_steps
    zeros = np.zeros((T, 2))
    yield zeros, rollout(x0, zeros, w, cfg.dt)[1:, 2:5]
    if warm_start is not None:
        U = np.clip(_shifted(warm_start, T), -cfg.u_max, cfg.u_max)
        yield U, rollout(x0, U, w, cfg.dt)[1:, 2:5]
    yield zeros, np.repeat(np.asarray(x0, dtype=float)[None, 2:5], T, axis=0)


def solve_ocp(x0, w: MlpParams, params: LeaderCostParams, cfg: PlanConfig, ws: Workspace,
              warm_start=None) -> PlanResult:
    """Projected gradient descent with Barzilai-Borwein steps and Armijo backtracking."""
    x0 = np.asarray(x0, dtype=float)
    if not (is_safe(x0[0:2], ws) and is_safe(x0[2:4], ws)):
        raise InfeasibleStart(f"start state {x0.tolist()} lies inside a safety region")
    T, dt = cfg.horizon_steps, cfg.dt

    best = None
    for U, XF in _initial_guesses(x0, w, cfg, warm_start):
        f = penalized_objective(U, XF, x0, w, params, ws, dt)
        if np.isfinite(f) and (best is None or f < best[2]):
            best = (U, XF, f)
    U, XF, f0 = best
    z = np.concatenate([U.ravel(), XF.ravel()])
    nU = 2 * T
    lo = np.concatenate([np.full(nU, -cfg.u_max), np.full(3 * T, -np.inf)])
    hi = -lo

    def evaluate(z, grad):
        out = penalized_objective(z[:nU].reshape(T, 2), z[nU:].reshape(T, 3), x0, w, params, ws, dt, grad)
        if grad:
            return out[0], np.concatenate([out[1].ravel(), out[2].ravel()])
        return out

    f, g = evaluate(z, True)
    step = 1.0 / max(1.0, np.linalg.norm(g))
    it = 0
    for it in range(1, cfg.ocp_iters + 1):
        if np.linalg.norm(np.clip(z - g, lo, hi) - z) < cfg.ocp_tol:
            break
        accepted = False
        for _ in range(40):
            z_new = np.clip(z - step * g, lo, hi)
            d = z_new - z
            f_new = evaluate(z_new, False)
            if f_new <= f - 1e-4 / step * (d @ d) and np.isfinite(f_new):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        f_new, g_new = evaluate(z_new, True)
        s, y = z_new - z, g_new - g
        sy = s @ y
        step = float(np.clip((s @ s) / sy, 1e-6, 1e3)) if sy > 0 else min(10 * step, 1e3)
        z, f, g = z_new, f_new, g_new
    U = z[:nU].reshape(T, 2).copy()
    XF = z[nU:].reshape(T, 3).copy()
    X = np.empty((T + 1, 5))
    X[:, 0:2] = leader_positions(x0, U, dt)
    X[0, 2:5] = x0[2:5]
    X[1:, 2:5] = XF
    return PlanResult(U, X, float(f), refined=False, iterations=it)


def _model_jacobians(X, U, w, dt):
    """Jacobians of the aggregated model dynamics at each (x_t, u_t)."""
    b, jb = forward_and_jacobian(w, X, U)
    A, B = follower_step_jacobians(X[:, 2:5], b, dt)
    n = len(X)
    Fx = np.zeros((n, 5, 5))
    Fx[:, 0, 0] = Fx[:, 1, 1] = 1.0
    Fx[:, 2:5, 2:5] = A
    Fx[:, 2:5, :] += B @ jb[:, :, :5]
    Fu = np.zeros((n, 5, 2))
    Fu[:, 0, 0] = Fu[:, 1, 1] = dt
    Fu[:, 2:5, :] = B @ jb[:, :, 5:]
    return b, Fx, Fu


def _point_barrier(X, ws, nu):
    """Barrier value and gradient at each joint state row of X (n, 5)."""
    val, g = _barrier_terms(np.stack([X[:, 0:2], X[:, 2:4]], axis=1), ws, nu)
    gx = np.zeros_like(X)
    gx[:, 0:2] = g[:, 0]
    gx[:, 2:4] = g[:, 1]
    return val, gx


def _hamiltonian(X, U, lam_next, w, params, xd, dt, grad):
    """H_t for every t at once (the barrier at x_t does not depend on u_t)."""
    sval, _, sgu = _stage_terms(X.copy(), U, params, xd)
    if grad:
        b, jb = forward_and_jacobian(w, X, U)
    else:
        b = forward(w, X, U)
    nxt = np.empty_like(X)
    nxt[:, 0:2] = X[:, 0:2] + U * dt
    nxt[:, 2:5] = follower_step(X[:, 2:5], b, dt)
    H = sval + np.sum(lam_next * nxt, axis=1)
    if not grad:
        return H
    _, B = follower_step_jacobians(X[:, 2:5], b, dt)
    gu = sgu + dt * lam_next[:, 0:2] + np.einsum("ti,tij->tj", lam_next[:, 2:5], B @ jb[:, :, 5:])
    return H, gu


def _minimize_hamiltonians(X, U, lam_next, w, params, xd, cfg: PlanConfig):
    """Projected gradient with per-step backtracking on every H_t."""
    U = U.copy()
    H, g = _hamiltonian(X, U, lam_next, w, params, xd, cfg.dt, True)
    step = np.ones(len(U))
    for _ in range(cfg.hamiltonian_iters):
        active = np.ones(len(U), dtype=bool)
        cand = U.copy()
        Hc = H.copy()
        for _ in range(30):
            cand[active] = np.clip(U[active] - step[active, None] * g[active], -cfg.u_max, cfg.u_max)
            Hc[active] = _hamiltonian(X[active], cand[active], lam_next[active], w, params, xd, cfg.dt, False)
            d = cand - U
            ok = Hc <= H - 1e-4 / step * np.sum(d * d, axis=1)
            active &= ~ok
            if not active.any():
                break
            step[active] *= 0.5
        moved = ~active & (np.abs(cand - U).max(axis=1) > 0)
        if not moved.any():
            break
        U[moved] = cand[moved]
        H, g = _hamiltonian(X, U, lam_next, w, params, xd, cfg.dt, True)
        step = np.minimum(step * 2.0, 1e3)
        if np.max(np.abs(np.clip(U - g, -cfg.u_max, cfg.u_max) - U)) < cfg.pmp_tol:
            break
    return U


def costates(X, U, w: MlpParams, params: LeaderCostParams, ws: Workspace, dt: float = DT) -> np.ndarray:
    """Backward recursion lam_T = dq + dc, lam_t = dH_t/dx_t along a model rollout X.

    Row 0 is left at zero since x_0 is fixed.
    """
    T = len(U)
    xd = target_state(ws)
    _, Fx, _ = _model_jacobians(X[:-1], U, w, dt)
    _, gx, _ = _stage_terms(X[:-1].copy(), U, params, xd)
    _, bgx = _point_barrier(X, ws, params.nu)
    _, tg = _terminal_terms(X[-1].copy(), params, xd)
    lam = np.zeros((T + 1, 5))
    lam[T] = tg + bgx[T]
    for t in range(T - 1, 0, -1):
        lam[t] = gx[t] + bgx[t] + Fx[t].T @ lam[t + 1]
    return lam


def hamiltonian_gradients(X, U, lam, w: MlpParams, params: LeaderCostParams, ws: Workspace, dt: float = DT):
    """dH_t/du_t for every t; along a rollout these equal the gradient of the rolled-out objective."""
    return _hamiltonian(X[:-1], U, lam[1:], w, params, target_state(ws), dt, True)[1]


def model_objective(U, x0, w, params, ws, dt=DT):
    """Penalized objective with the follower states rolled out through the model."""
    X = rollout(x0, U, w, dt)
    return penalized_objective(U, X[1:, 2:5], x0, w, params, ws, dt), X


def pmp_refine(plan: PlanResult, x0, w: MlpParams, params: LeaderCostParams, cfg: PlanConfig,
               ws: Workspace, fallbacks=()) -> PlanResult:
    """Improve a control sequence with forward/costate/Hamiltonian sweeps on the model dynamics.

    Both the input and the output are scored by the penalized objective at
    the model rollout of their controls, where the dynamics penalty vanishes.
    Each sweep rolls the controls out, runs the costate recursion backward,
    minimizes every Hamiltonian over the control box, and moves toward those
    minimizers with a halving blend until the rolled-out objective drops.
    When the input's rollout touches an obstacle, sweeps start from the
    best of ``fallbacks`` (alternative control sequences) instead. Returns
    the input controls when nothing improves.
    """
    x0 = np.asarray(x0, dtype=float)
    xd = target_state(ws)
    T, dt = len(plan.controls), cfg.dt
    U0 = np.clip(plan.controls, -cfg.u_max, cfg.u_max)
    J0, X0 = model_objective(U0, x0, w, params, ws, dt)
    U, J, X = U0, J0, X0
    if not np.isfinite(J0):
        for alt in fallbacks:
            alt = np.clip(np.asarray(alt, dtype=float), -cfg.u_max, cfg.u_max)
            Ja, Xa = model_objective(alt, x0, w, params, ws, dt)
            if Ja < J:
                U, J, X = alt, Ja, Xa
    sweeps = 0
    for sweeps in range(1, cfg.pmp_sweeps + 1):
        if not np.isfinite(J):
            break
        lam = costates(X, U, w, params, ws, dt)
        U_star = _minimize_hamiltonians(X[:-1], U, lam[1:], w, params, xd, cfg)
        improved = False
        for k in range(12):
            U_new = U + 0.5 ** k * (U_star - U)
            J_new, X_new = model_objective(U_new, x0, w, params, ws, dt)
            if J_new < J:
                improved = True
                break
        if not improved:
            break
        change = np.abs(U_new - U).max()
        U, J, X = U_new, J_new, X_new
        if change < cfg.pmp_tol:
            break
    if J < J0:
        return PlanResult(U, X, float(J), refined=True, iterations=sweeps, initial_objective=float(J0))
    return PlanResult(U0, X0, float(J0), refined=False, iterations=sweeps, initial_objective=float(J0))


def initial_state(follower_pos, ws: Workspace, cfg: PlanConfig, heading: float | None = None,
                  leader_pos=None) -> np.ndarray:
    """Joint start state with the leader offset from the follower, moved to a feasible spot."""
    pF = np.asarray(follower_pos, dtype=float)
    if not is_feasible(pF, ws):
        raise InfeasibleStart(f"follower start {pF.tolist()} is not feasible")
    if leader_pos is None:
        pL = np.clip(pF + np.asarray(cfg.leader_offset), ws.low, ws.high)
        if not is_feasible(pL, ws):
            pL = _nearest_feasible(pL, ws)
    else:
        pL = np.asarray(leader_pos, dtype=float)
        if not is_feasible(pL, ws):
            raise InfeasibleStart(f"leader start {pL.tolist()} is not feasible")
    phi = cfg.initial_heading if heading is None else heading
    return np.array([*pL, *pF, wrap_angle(phi)])


def _nearest_feasible(p, ws):
    for r in np.linspace(0.1, 5.0, 50):
        ang = np.linspace(0, 2 * np.pi, 72, endpoint=False)
        cand = p + r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        ok = is_feasible(cand, ws)
        if ok.any():
            return cand[np.flatnonzero(ok)[0]]
    raise InfeasibleStart(f"no feasible point near {p.tolist()}")


def _reached(x, ws):
    return float(np.linalg.norm(x[2:4] - np.asarray(ws.destination))) <= ws.goal_radius


def guide(ftype: FollowerType, x_init, w_theta: MlpParams, cfg: PlanConfig, params: LeaderCostParams,
          ws: Workspace) -> Trajectory:
    """Receding-horizon guidance of the true follower using the adapted model."""
    x = np.asarray(x_init, dtype=float).copy()
    if not (is_safe(x[0:2], ws) and is_safe(x[2:4], ws)):
        raise InfeasibleStart(f"start state {x.tolist()} lies inside a safety region")
    states, uLs, uFs, costs, diags = [x.copy()], [], [], [], []
    warm = None
    reason = "timeout"
    for t in range(cfg.max_time_steps + 1):
        if _reached(x, ws):
            reason = "reached"
            break
        if t >= cfg.max_time_steps:
            break
        plan = solve_ocp(x, w_theta, params, cfg, ws, warm)
        refined = pmp_refine(plan, x, w_theta, params, cfg, ws, _fallbacks(warm, cfg))
        uL = refined.controls[0].copy()
        try:
            uF = best_response(x, uL, ftype, ws, cfg.dt)
        except FollowerTrapped:
            reason = "trapped"
            break
        diags.append({"t": t, "ocp_objective": plan.objective, "objective_before": refined.initial_objective,
                      "objective_after": refined.objective,
                      "refined": refined.refined, "ocp_iterations": plan.iterations,
                      "pmp_sweeps": refined.iterations})
        costs.append(leader_stage_cost(x, uL, params, ws))
        x = joint_step(x, uL, uF, cfg.dt)
        states.append(x.copy())
        uLs.append(uL)
        uFs.append(uF)
        warm = refined.controls
    return _trajectory(states, uLs, uFs, costs, reason, diags)


def run_unguided(ftype: FollowerType, x_init_follower, cfg: PlanConfig, ws: Workspace) -> Trajectory:
    """Myopic follower alone; stops on reaching the goal, timeout or a fixed point."""
    xF = np.asarray(x_init_follower, dtype=float)
    if xF.shape == (2,):
        xF = np.array([*xF, cfg.initial_heading])
    x = np.array([np.nan, np.nan, *xF[0:2], wrap_angle(xF[2])])
    if not is_safe(x[2:4], ws):
        raise InfeasibleStart(f"follower start {xF.tolist()} lies inside a safety region")
    states, uFs, costs = [x.copy()], [], []
    reason = "timeout"
    for t in range(cfg.max_time_steps + 1):
        if _reached(x, ws):
            reason = "reached"
            break
        if t >= cfg.max_time_steps:
            break
        try:
            uF = myopic_policy(x, ftype, ws, cfg.dt)
        except FollowerTrapped:
            reason = "trapped"
            break
        costs.append(follower_cost(uF, x, None, ftype, ws, cfg.dt, guidance=False))
        nxt = x.copy()
        nxt[2:5] = follower_step(x[2:5], uF, cfg.dt)
        uFs.append(uF)
        states.append(nxt.copy())
        if np.array_equal(nxt[2:5], x[2:5]):
            reason = "trapped"
            break
        x = nxt
    n = len(uFs)
    return _trajectory(states, [np.full(2, np.nan)] * n, uFs, costs, reason, [])


def _trajectory(states, uLs, uFs, costs, reason, diags) -> Trajectory:
    return Trajectory(np.array(states).reshape(-1, 5), np.array(uLs).reshape(-1, 2),
                      np.array(uFs).reshape(-1, 2), np.array(costs, dtype=float), reason, diags)


def safety_violations(traj: Trajectory, ws: Workspace) -> int:
    """Recorded positions on or inside a safety region (leader rows with NaN are skipped)."""
    count = 0
    for sl in (slice(0, 2), slice(2, 4)):
        P = traj.states[:, sl]
        P = P[np.all(np.isfinite(P), axis=1)]
        if len(P):
            count += int(np.sum(~np.asarray(is_safe(P, ws), dtype=bool)))
    return count


def replay_error(traj: Trajectory, dt: float = DT) -> float:
    """Largest deviation between recorded states and a replay of the recorded controls."""
    err = 0.0
    for t in range(traj.steps):
        x = traj.states[t]
        nxt = x.copy()
        if np.all(np.isfinite(traj.leader_controls[t])):
            nxt = joint_step(x, traj.leader_controls[t], traj.follower_controls[t], dt)
        else:
            nxt[2:5] = follower_step(x[2:5], traj.follower_controls[t], dt)
        diff = np.abs(nxt - traj.states[t + 1])
        err = max(err, float(np.nanmax(diff)) if np.any(np.isfinite(diff)) else 0.0)
    return err


__all__ = [
    "InfeasibleStart", "LeaderCostParams", "PlanConfig", "PlanResult", "Trajectory", "costates", "guide",
    "hamiltonian_gradients",
    "initial_state", "leader_stage_cost", "leader_terminal_cost", "model_objective", "penalized_objective",
    "pmp_refine", "replay_error", "rollout", "run_unguided", "safety_violations", "solve_ocp", "target_state",
]
