"""Run configuration: one JSON document holding every experiment setting."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dynamics import DT, U_MAX
from .env import Workspace, default_workspace
from .follower import TypeDistribution
from .meta import MetaConfig
from .planner import LeaderCostParams, PlanConfig

SEED_ENV = "SGMETA_SEED"
_KEYS = {"workspace", "dynamics", "leader_cost", "follower_types", "meta", "plan", "seed"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    workspace: Workspace = field(default_factory=default_workspace)
    dt: float = DT
    u_max: float = U_MAX
    leader_cost: LeaderCostParams = field(default_factory=LeaderCostParams)
    follower_types: TypeDistribution = field(default_factory=TypeDistribution)
    meta: MetaConfig = field(default_factory=MetaConfig)
    plan_settings: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and self.u_max > 0):
            raise ConfigError("dt and u_max must be positive")
        # validate eagerly so a bad plan block fails at load time
        self.plan

    @property
    def plan(self) -> PlanConfig:
        """Planner settings with dt and u_max taken from the dynamics block."""
        return PlanConfig.from_dict({**self.plan_settings, "dt": self.dt, "u_max": self.u_max})

    def to_dict(self) -> dict:
        plan = self.plan.to_dict()
        del plan["dt"], plan["u_max"]
        return {
            "seed": self.seed,
            "workspace": self.workspace.to_dict(),
            "dynamics": {"dt": self.dt, "u_max": self.u_max},
            "leader_cost": self.leader_cost.to_dict(),
            "follower_types": self.follower_types.to_dict(),
            "meta": self.meta.to_dict(),
            "plan": plan,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        dyn = dict(d.get("dynamics", {}))
        bad = set(dyn) - {"dt", "u_max"}
        if bad:
            raise ConfigError(f"unknown dynamics keys: {sorted(bad)}")
        plan = dict(d.get("plan", {}))
        if {"dt", "u_max"} & set(plan):
            raise ConfigError("dt and u_max belong in the dynamics block")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
        try:
            return cls(
                workspace=Workspace.from_dict(d["workspace"]) if "workspace" in d else default_workspace(),
                dt=float(dyn.get("dt", DT)),
                u_max=float(dyn.get("u_max", U_MAX)),
                leader_cost=LeaderCostParams.from_dict(d.get("leader_cost", {})),
                follower_types=TypeDistribution.from_dict(d.get("follower_types", {})),
                meta=MetaConfig.from_dict(d.get("meta", {})),
                plan_settings=plan,
                seed=seed,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path=None, env=None) -> RunConfig:
    """Read a config file (or defaults when path is None); SGMETA_SEED overrides the seed."""
    env = os.environ if env is None else env
    if path is None:
        cfg = RunConfig()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = RunConfig.from_dict(raw)
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        if seed < 0:
            raise ConfigError(f"{SEED_ENV} must be nonnegative")
        cfg = replace(cfg, seed=seed)
    return cfg


def write_default_config(path) -> None:
    Path(path).write_text(json.dumps(RunConfig().to_dict(), indent=2) + "\n")
