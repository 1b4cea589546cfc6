"""Command-line front end: ``sgmeta <command> ...``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import meta as meta_mod
from .config import ConfigError, RunConfig, load_config, write_default_config
from .follower import FollowerType
from .net import Dataset, MlpParams, load_checkpoint, save_checkpoint, task_loss
from .planner import InfeasibleStart, guide, initial_state, replay_error, run_unguided
from .records import load_trajectory, save_loss_trace, save_trajectory
from .sampler import SamplePool

log = logging.getLogger("sgmeta")

# independent random streams per purpose, all derived from the config seed
POOLS, META, BASELINES, ADAPT, EVAL = range(1, 6)


class UsageError(Exception):
    pass


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, purpose, *extra])


def _parse_point(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected 'x,y', got {text!r}") from None
    if len(vals) != 2 or not np.all(np.isfinite(vals)):
        raise UsageError(f"expected 'x,y', got {text!r}")
    return np.array(vals)


def _ftype(cfg: RunConfig, type_id: int) -> FollowerType:
    try:
        return cfg.follower_types.by_id(type_id)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


def _model(path) -> MlpParams:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: invalid checkpoint ({exc})") from None


def _sidecar(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def save_pools(pools: dict, path) -> None:
    arrays = {}
    for tid, pool in pools.items():
        arrays[f"flat_{tid}"] = pool.flat.as_array()
        arrays[f"near_{tid}"] = pool.near.as_array()
    np.savez(path, **arrays)


def load_pools(path, cfg: RunConfig) -> dict:
    out = {}
    with np.load(path) as f:
        for t in cfg.follower_types.types:
            parts = []
            for kind in ("flat", "near"):
                a = f[f"{kind}_{t.id}"]
                parts.append(Dataset(a[:, 0:5], a[:, 5:7], a[:, 7:9]))
            out[t.id] = SamplePool(t, *parts)
    return out


def labeled_pools(cfg: RunConfig, cache=None) -> dict:
    """Per-type labeled pools from the config seed, optionally cached on disk."""
    if cache is not None and Path(cache).is_file():
        return load_pools(cache, cfg)
    pools = meta_mod.build_pools(cfg.follower_types, cfg.meta, cfg.workspace, stream(cfg.seed, POOLS), cfg.u_max)
    if cache is not None:
        save_pools(pools, cache)
    return pools


def cmd_init_config(args, cfg):
    out = Path(args.out)
    if out.exists() and not args.force:
        raise UsageError(f"{out} exists; pass --force to overwrite")
    write_default_config(out)
    print(f"wrote {out}")


def cmd_train_meta(args, cfg):
    pools = labeled_pools(cfg, args.pool_cache) if cfg.meta.pool_size > 0 else None
    trace = []
    w = meta_mod.train_meta(cfg.meta, cfg.follower_types, cfg.workspace, stream(cfg.seed, META),
                            pools=pools, trace=trace, u_max=cfg.u_max)
    save_checkpoint(w, args.out, kind="meta", seed=cfg.seed, iterations=cfg.meta.max_iter)
    trace_path = _sidecar(args.out, "_loss.csv")
    save_loss_trace(trace, trace_path, ("iter", "mean_outer_loss"))
    if args.svg and trace:
        from .plotting import plot_loss_trace
        it, loss = np.array(trace).T
        plot_loss_trace(it, loss, args.svg, "meta-training outer loss")
    print(f"wrote {args.out} and {trace_path}")


def cmd_adapt(args, cfg):
    w = _model(args.model)
    ftype = _ftype(cfg, args.type)
    data = meta_mod.adaptation_data(ftype, cfg.meta, cfg.workspace, stream(cfg.seed, ADAPT, ftype.id), w.u_max)
    adapted, losses = meta_mod.adaptation_curve(w, data, cfg.meta.alpha, cfg.meta.adapt_steps)
    save_checkpoint(adapted, args.out, kind="adapted", adapted_type=ftype.id, seed=cfg.seed)
    curve_path = _sidecar(args.out, "_adapt.csv")
    save_loss_trace(list(enumerate(losses)), curve_path, ("step", "mse"))
    if args.svg:
        from .plotting import plot_adaptation_curves
        plot_adaptation_curves({f"type {ftype.id}": losses}, args.svg, "adaptation loss")
    print(f"wrote {args.out} and {curve_path}; mse {losses[0]:.6g} -> {losses[-1]:.6g}")


def _heading(args):
    return None if args.heading is None else float(args.heading)


def cmd_plan(args, cfg):
    w = _model(args.model)
    ftype = _ftype(cfg, args.type)
    plan_cfg = cfg.plan
    if args.adapt:
        data = meta_mod.adaptation_data(ftype, cfg.meta, cfg.workspace, stream(cfg.seed, ADAPT, ftype.id), w.u_max)
        w = meta_mod.adaptation_curve(w, data, cfg.meta.alpha, cfg.meta.adapt_steps)[0]
    try:
        x0 = initial_state(_parse_point(args.start), cfg.workspace, plan_cfg, _heading(args),
                           None if args.leader is None else _parse_point(args.leader))
    except InfeasibleStart as exc:
        raise UsageError(str(exc)) from None
    traj = guide(ftype, x0, w, plan_cfg, cfg.leader_cost, cfg.workspace)
    save_trajectory(traj, args.out)
    diag_path = _sidecar(args.out, "_diagnostics.json")
    diag_path.write_text(json.dumps(traj.diagnostics, indent=1))
    if args.svg:
        from .plotting import plot_trajectory
        plot_trajectory(traj, cfg.workspace, args.svg, f"type {ftype.id} guided: {traj.reason}")
    print(f"{traj.reason} after {traj.steps} steps; wrote {args.out}")


def cmd_no_guidance(args, cfg):
    ftype = _ftype(cfg, args.type)
    plan_cfg = cfg.plan
    start = _parse_point(args.start)
    heading = plan_cfg.initial_heading if args.heading is None else float(args.heading)
    try:
        traj = run_unguided(ftype, np.array([*start, heading]), plan_cfg, cfg.workspace)
    except InfeasibleStart as exc:
        raise UsageError(str(exc)) from None
    save_trajectory(traj, args.out)
    if args.svg:
        from .plotting import plot_trajectory
        plot_trajectory(traj, cfg.workspace, args.svg, f"type {ftype.id} unguided: {traj.reason}", shading=ftype)
    print(f"{traj.reason} after {traj.steps} steps; wrote {args.out}")


def cmd_baselines(args, cfg):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pools = labeled_pools(cfg, args.pool_cache)
    oa_rng, pa_rng = stream(cfg.seed, BASELINES).spawn(2)
    oa = meta_mod.train_output_ave(cfg.follower_types, cfg.workspace, cfg.meta, oa_rng, pools=pools, u_max=cfg.u_max)
    save_checkpoint(oa, out / "output_ave.json", kind="output_ave", seed=cfg.seed)
    components = []
    pa = meta_mod.train_param_ave(cfg.follower_types, cfg.workspace, cfg.meta, pa_rng, pools=pools,
                                  u_max=cfg.u_max, components=components)
    save_checkpoint(pa, out / "param_ave.json", kind="param_ave", seed=cfg.seed)
    rows = [("output_ave", "all", task_loss(oa, meta_mod.pooled_dataset(
        cfg.follower_types, pools, cfg.meta.pool_size, stream(cfg.seed, BASELINES, 99))))]
    for t, m in zip(cfg.follower_types.types, components):
        save_checkpoint(m, out / f"param_ave_type{t.id}.json", kind="param_ave_component", type=t.id, seed=cfg.seed)
        rows.append((f"param_ave_type{t.id}", t.id, task_loss(m, pools[t.id].all)))
    with open(out / "training_summary.csv", "w") as fh:
        fh.write("model,data,train_mse\n")
        for name, data, loss in rows:
            fh.write(f"{name},{data},{loss!r}\n")
    print(f"wrote baselines to {out}")


def evaluate_adaptation(models: dict, cfg: RunConfig):
    """Adapt every model on a common per-type dataset and score it on a held-out set.

    Returns (curves, final): curves[label][type] is the C + 1 adaptation
    losses, final[label][type] the held-out MSE after C steps.
    """
    curves = {k: {} for k in models}
    final = {k: {} for k in models}
    for t in cfg.follower_types.types:
        adapt_rng, eval_rng = stream(cfg.seed, EVAL, t.id).spawn(2)
        data = meta_mod.adaptation_data(t, cfg.meta, cfg.workspace, adapt_rng, cfg.u_max)
        held = meta_mod.adaptation_data(t, replace(cfg.meta, adapt_samples=cfg.meta.eval_samples),
                                        cfg.workspace, eval_rng, cfg.u_max)
        for label, w in models.items():
            adapted, losses = meta_mod.adaptation_curve(w, data, cfg.meta.alpha, cfg.meta.adapt_steps)
            curves[label][t.id] = losses
            final[label][t.id] = task_loss(adapted, held)
    return curves, final


def cmd_eval_adapt(args, cfg):
    models = {"meta": _model(args.meta), "output_ave": _model(args.output_ave), "param_ave": _model(args.param_ave)}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves, final = evaluate_adaptation(models, cfg)
    with open(out / "adaptation_curves.csv", "w") as fh:
        fh.write("model,type,step,mse\n")
        for label, per_type in curves.items():
            for tid, losses in per_type.items():
                for k, v in enumerate(losses):
                    fh.write(f"{label},{tid},{k},{v!r}\n")
    with open(out / "final_mse.csv", "w") as fh:
        fh.write("model,type,heldout_mse\n")
        for label, per_type in final.items():
            for tid, v in per_type.items():
                fh.write(f"{label},{tid},{v!r}\n")
    (out / "final_mse.json").write_text(json.dumps({k: {str(t): v for t, v in d.items()} for k, d in final.items()},
                                                   indent=2))
    from .plotting import plot_adaptation_curves, plot_mse_bars
    for t in cfg.follower_types.types:
        plot_adaptation_curves({k: curves[k][t.id] for k in models}, out / f"adaptation_type{t.id}.svg",
                               f"adaptation loss, type {t.id}")
    plot_mse_bars(final, out / "final_mse.svg", "held-out MSE after adaptation")
    for t in cfg.follower_types.types:
        print(f"type {t.id}: " + ", ".join(f"{k} {final[k][t.id]:.4f}" for k in models))


def cmd_plot(args, cfg):
    path = Path(args.csv)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    header = path.read_text().split("\n", 1)[0].strip()
    from . import plotting
    if header.startswith("t,pLx"):
        traj = load_trajectory(path)
        shade = _ftype(cfg, args.shade_type) if args.shade_type is not None else None
        plotting.plot_trajectory(traj, cfg.workspace, args.out, f"{traj.reason} after {traj.steps} steps", shade)
    elif header == "model,type,step,mse":
        import csv
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        tid = str(args.type) if args.type is not None else rows[0]["type"]
        curves = {}
        for r in rows:
            if r["type"] == tid:
                curves.setdefault(r["model"], []).append(float(r["mse"]))
        plotting.plot_adaptation_curves(curves, args.out, f"adaptation loss, type {tid}")
    elif header in ("iter,mean_outer_loss", "step,mse"):
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        plotting.plot_loss_trace(arr[:, 0], arr[:, 1], args.out)
    else:
        raise UsageError(f"{path}: unrecognized CSV header {header!r}")
    print(f"wrote {args.out}")


def cmd_verify(args, cfg):
    path = Path(args.csv)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    try:
        traj = load_trajectory(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    err = replay_error(traj, cfg.dt)
    ok = err <= args.tol
    print(f"max replay deviation {err:.3e} ({'ok' if ok else 'FAILED'}, tolerance {args.tol:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgmeta", description="Meta-learned leader-follower trajectory guidance.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, config=True):
        s = sub.add_parser(name, help=help_, description=help_)
        if config:
            s.add_argument("--config", help="JSON run config (defaults when omitted)")
        s.set_defaults(func=func)
        return s

    s = add("init-config", cmd_init_config, "write the full default config", config=False)
    s.add_argument("out")
    s.add_argument("--force", action="store_true", help="overwrite an existing file")

    s = add("train-meta", cmd_train_meta, "meta-train the best-response model")
    s.add_argument("--out", required=True, help="checkpoint path; the loss trace goes next to it")
    s.add_argument("--pool-cache", help="npz file caching the labeled sample pools")
    s.add_argument("--svg", help="also plot the loss trace here")

    s = add("adapt", cmd_adapt, "adapt a model to one follower type")
    s.add_argument("--model", required=True)
    s.add_argument("--type", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--svg", help="also plot the adaptation curve here")

    s = add("plan", cmd_plan, "guide one follower with receding-horizon planning")
    s.add_argument("--model", required=True)
    s.add_argument("--type", type=int, required=True)
    s.add_argument("--start", required=True, help="follower start 'x,y'")
    s.add_argument("--leader", help="leader start 'x,y' (default: offset from the follower)")
    s.add_argument("--heading", type=float, help="initial follower heading in rad")
    s.add_argument("--adapt", action="store_true", help="adapt the model to the type before planning")
    s.add_argument("--out", required=True, help="trajectory CSV")
    s.add_argument("--svg", help="also plot the trajectory here")

    s = add("no-guidance", cmd_no_guidance, "simulate a follower without a leader")
    s.add_argument("--type", type=int, required=True)
    s.add_argument("--start", required=True, help="follower start 'x,y'")
    s.add_argument("--heading", type=float, help="initial follower heading in rad")
    s.add_argument("--out", required=True)
    s.add_argument("--svg", help="also plot the trajectory with sensing-cost shading")

    s = add("baselines", cmd_baselines, "train the Output-Ave and Param-Ave baselines")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--pool-cache", help="npz file caching the labeled sample pools")

    s = add("eval-adapt", cmd_eval_adapt, "compare adaptation of the meta model and both baselines")
    s.add_argument("--meta", required=True)
    s.add_argument("--output-ave", required=True)
    s.add_argument("--param-ave", required=True)
    s.add_argument("--out-dir", required=True)

    s = add("plot", cmd_plot, "render a trajectory, adaptation or loss CSV")
    s.add_argument("csv")
    s.add_argument("--out", required=True, help="figure path (.svg or .png)")
    s.add_argument("--type", type=int, help="type to show for adaptation-curve CSVs")
    s.add_argument("--shade-type", type=int, help="shade the sensing cost of this type")

    s = add("verify", cmd_verify, "replay a trajectory CSV through the dynamics")
    s.add_argument("csv")
    s.add_argument("--tol", type=float, default=1e-12)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None)) if args.command != "init-config" else None
        rc = args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
