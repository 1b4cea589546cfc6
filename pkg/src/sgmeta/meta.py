"""First-order meta-training, fast adaptation and the two averaging baselines."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .dynamics import U_MAX
from .env import Workspace
from .follower import FollowerType, TypeDistribution
from .net import Dataset, MlpParams, init_params, loss_and_grad, loss_grad, sgd_step, task_loss
from .sampler import SamplePlan, SamplePool, build_pool, sample_dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 1e-4
    beta: float = 0.3
    warmup: int = 1000
    max_iter: int = 20_000
    batch_tasks: int = 5
    k_total: int = 100
    kappa: float = 2.0
    adapt_steps: int = 50
    adapt_samples: int = 1000
    eval_samples: int = 1000
    # labeled samples kept per type; 0 labels fresh data every iteration
    pool_size: int = 15_000
    # 133 epochs of 150 steps: about as many parameter updates as max_iter
    baseline_epochs: int = 133
    baseline_iters: int = 150
    baseline_lr: float = 0.3
    leader_radius: float = 3.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.batch_tasks < 1:
            raise ValueError("batch_tasks must be at least 1")
        if self.max_iter < 0 or self.adapt_steps < 0 or self.warmup < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.k_total < 2 or self.adapt_samples < 1 or self.eval_samples < 1:
            raise ValueError("sample counts too small")

    @property
    def plan(self) -> SamplePlan:
        return SamplePlan.from_total(self.k_total, self.kappa)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetaConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown meta keys: {sorted(unknown)}")
        return cls(**d)


def inner_update(w: MlpParams, train: Dataset, alpha: float) -> MlpParams:
    """One gradient step on the task's training split."""
    return sgd_step(w, loss_grad(w, train), alpha)


def meta_step(w: MlpParams, batch, alpha: float, beta: float, return_loss: bool = False):
    """First-order outer update over a batch of (train, test) task splits.

    The outer gradient of each task is the test-loss gradient evaluated at
    its adapted parameters; the inner step is not differentiated through.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("meta_step needs at least one task")
    total = np.zeros_like(w.flat)
    losses = []
    for train, test in batch:
        adapted = inner_update(w, train, alpha)
        loss, g = loss_and_grad(adapted, test)
        total += g
        losses.append(loss)
    new = sgd_step(w, total / len(batch), beta)
    return (new, float(np.mean(losses))) if return_loss else new


def build_pools(dist: TypeDistribution, cfg: MetaConfig, ws: Workspace, rng, u_max: float = U_MAX):
    """One labeled pool per type, each from its own child stream."""
    streams = rng.spawn(len(dist.types))
    pools = {}
    for t, r in zip(dist.types, streams):
        log.info("labeling %d samples for type %d", cfg.pool_size, t.id)
        pools[t.id] = build_pool(t, cfg.pool_size, cfg.kappa, ws, r, u_max=u_max,
                                 leader_radius=cfg.leader_radius)
    return pools


def _draw(ftype: FollowerType, cfg: MetaConfig, ws, rng, pools, u_max) -> Dataset:
    if pools is not None:
        return pools[ftype.id].draw(cfg.plan, rng)
    return sample_dataset(ftype, cfg.plan, ws, rng, u_max=u_max, leader_radius=cfg.leader_radius)


def beta_at(cfg: MetaConfig, k: int) -> float:
    if cfg.warmup <= 0:
        return cfg.beta
    return cfg.beta * min(1.0, (k + 1) / cfg.warmup)


def train_meta(cfg: MetaConfig, dist: TypeDistribution, ws: Workspace, rng, *,
               pools: dict | None = None, trace: list | None = None, u_max: float = U_MAX) -> MlpParams:
    """Meta-train the best-response model.

    Every iteration samples ``batch_tasks`` types from the distribution and
    draws a fresh train and test set of ``k_total`` samples for each. With
    ``trace`` given, ``(iteration, mean outer loss)`` is appended per step.
    """
    init_rng, pool_rng, loop_rng = rng.spawn(3)
    w = init_params(init_rng, u_max)
    if cfg.max_iter == 0:
        return w.replace(w.flat)
    if pools is None and cfg.pool_size > 0:
        pools = build_pools(dist, cfg, ws, pool_rng, u_max)
    n_types = len(dist.types)
    for k in range(cfg.max_iter):
        ids = loop_rng.choice(n_types, size=cfg.batch_tasks, p=dist.probs)
        batch = []
        for i in ids:
            t = dist.types[i]
            train = _draw(t, cfg, ws, loop_rng, pools, u_max)
            test = _draw(t, cfg, ws, loop_rng, pools, u_max)
            batch.append((train, test))
        w, loss = meta_step(w, batch, cfg.alpha, beta_at(cfg, k), return_loss=True)
        if trace is not None:
            trace.append((k, loss))
        if (k + 1) % 1000 == 0:
            log.info("meta iteration %d: outer loss %.5f", k + 1, loss)
    return w


def adaptation_curve(w: MlpParams, data: Dataset, alpha: float, steps: int):
    """Full-batch gradient steps; returns the final parameters and the C+1 losses."""
    losses = []
    for _ in range(steps):
        loss, g = loss_and_grad(w, data)
        losses.append(loss)
        w = sgd_step(w, g, alpha)
    losses.append(task_loss(w, data))
    return w, losses


def adaptation_data(ftype: FollowerType, cfg: MetaConfig, ws: Workspace, rng, u_max: float = U_MAX) -> Dataset:
    plan = SamplePlan.from_total(cfg.adapt_samples, cfg.kappa)
    return sample_dataset(ftype, plan, ws, rng, u_max=u_max, leader_radius=cfg.leader_radius)


def adapt(w_meta: MlpParams, ftype: FollowerType, cfg: MetaConfig, ws: Workspace, rng,
          data: Dataset | None = None) -> MlpParams:
    """Specialize the meta model to one follower with C gradient steps on K' samples."""
    if data is None:
        data = adaptation_data(ftype, cfg, ws, rng, w_meta.u_max)
    return adaptation_curve(w_meta, data, cfg.alpha, cfg.adapt_steps)[0]


def train_supervised(data: Dataset, cfg: MetaConfig, rng, u_max: float = U_MAX) -> MlpParams:
    """Plain minibatch SGD: ``baseline_epochs`` epochs of ``baseline_iters`` steps."""
    init_rng, loop_rng = rng.spawn(2)
    w = init_params(init_rng, u_max)
    n = len(data)
    batch = max(1, n // cfg.baseline_iters)
    for epoch in range(cfg.baseline_epochs):
        order = loop_rng.permutation(n)
        for it in range(cfg.baseline_iters):
            idx = order[(it * batch) % n:(it * batch) % n + batch]
            w = sgd_step(w, loss_grad(w, data[idx]), cfg.baseline_lr)
    return w


def pooled_dataset(dist: TypeDistribution, pools: dict, total: int, rng) -> Dataset:
    """Mix per-type pools with counts proportional to the type probabilities, shuffled."""
    parts = []
    for t, p in zip(dist.types, dist.probs):
        n = int(round(p * total))
        if n:
            pool = pools[t.id].all
            parts.append(pool[rng.choice(len(pool), n, replace=False)])
    data = Dataset.concat(parts)
    return data[rng.permutation(len(data))]


def train_output_ave(dist: TypeDistribution, ws: Workspace, cfg: MetaConfig, rng, *,
                     pools: dict | None = None, u_max: float = U_MAX) -> MlpParams:
    """One network fitted to the shuffled mixture of all types' data."""
    pool_rng, mix_rng, fit_rng = rng.spawn(3)
    if pools is None:
        pools = build_pools(dist, cfg, ws, pool_rng, u_max)
    data = pooled_dataset(dist, pools, cfg.pool_size, mix_rng)
    return train_supervised(data, cfg, fit_rng, u_max)


def train_param_ave(dist: TypeDistribution, ws: Workspace, cfg: MetaConfig, rng, *,
                    pools: dict | None = None, u_max: float = U_MAX, components: list | None = None) -> MlpParams:
    """Average, weighted by p(theta), of independently trained per-type networks."""
    pool_rng, *fit_rngs = rng.spawn(1 + len(dist.types))
    if pools is None:
        pools = build_pools(dist, cfg, ws, pool_rng, u_max)
    models = [train_supervised(pools[t.id].all, cfg, r, u_max) for t, r in zip(dist.types, fit_rngs)]
    if components is not None:
        components.extend(models)
    avg = np.zeros_like(models[0].flat)
    for m, p in zip(models, dist.probs):
        avg += p * m.flat
    return models[0].replace(avg)
