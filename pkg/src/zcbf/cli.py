"""Command-line interface.

    zcbf train      --config cfg.yaml [--out DIR]
    zcbf eval-grid  --config cfg.yaml [--checkpoint CKPT] [--gammas a,b,c] [--out DIR]
    zcbf simulate   --config cfg.yaml [--checkpoint CKPT] [--mode ref|filtered] [--out DIR]
    zcbf audit      --config cfg.yaml [--checkpoint CKPT] [--out DIR]
    zcbf reproduce  CASE [--config cfg.yaml] [--out DIR]

ZCBF_CONFIG supplies a default --config path. Exit codes: 0 success,
1 validation problem, 2 runtime failure (e.g. training divergence).
All artifacts land inside the configured output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import grid as grid_mod
from . import net as net_mod
from . import sim as sim_mod
from . import zubov
from .config import (
    ENVIRONMENTS,
    ConfigError,
    RunConfig,
    build_environment,
    default_run_config,
    load_config,
    save_config,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
CONFIG_ENV_VAR = "ZCBF_CONFIG"


def _resolve_config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        raise ConfigError(f"no config given; pass --config or set {CONFIG_ENV_VAR}")
    return load_config(path)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(getattr(args, "out", None) or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint_path(out: Path, args) -> Path:
    override = getattr(args, "checkpoint", None)
    return Path(override) if override else out / "checkpoint.zcbf"


def _load_net(cfg: RunConfig, path: Path):
    if not Path(path).exists():
        raise ConfigError(f"checkpoint not found: {path}")
    netobj, ckpt_alpha = net_mod.load_checkpoint(path)
    if ckpt_alpha != cfg.train.alpha:
        raise ConfigError(
            f"checkpoint alpha {ckpt_alpha} does not match train.alpha "
            f"{cfg.train.alpha}; the barrier inversion would be inconsistent"
        )
    return netobj


def _grid_slice(cfg: RunConfig, sys_):
    g = cfg.grid
    fixed = np.zeros(sys_.n) if g.fixed is None else np.asarray(g.fixed, dtype=np.float64)
    return grid_mod.slice_for_system(
        sys_, g.axis_i, g.axis_j, fixed, g.resolution, g.ranges
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, args)
    sys_, ref = build_environment(cfg)
    log_path = out / "train_log.jsonl"
    with open(log_path, "w") as log:

        def record(report: zubov.LossReport):
            log.write(json.dumps(report.__dict__) + "\n")

        netobj, history = zubov.train(sys_, ref, cfg.train, callback=record)
    ckpt = _checkpoint_path(out, args)
    net_mod.save_checkpoint(netobj, cfg.train.alpha, ckpt)
    net_mod.save_checkpoint_text(netobj, cfg.train.alpha, ckpt.with_suffix(".txt"))
    final = history[-1] if history else zubov.losses(
        netobj, sys_, ref, cfg.train,
        zubov.SampleBank.build(sys_, ref, cfg.train, np.random.default_rng(cfg.train.seed)),
    )
    print(
        f"trained {cfg.environment}: epochs={len(history)} "
        f"l_r={final.l_r:.3e} l_b={final.l_b:.3e} l_safe={final.l_safe:.3e} "
        f"l_unsafe={final.l_unsafe:.3e} total={final.total:.3e}"
    )
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval_grid(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, args)
    sys_, _ = build_environment(cfg)
    netobj = _load_net(cfg, _checkpoint_path(out, args))
    gammas = cfg.grid.gammas
    if getattr(args, "gammas", None):
        gammas = tuple(float(v) for v in args.gammas.split(","))
    gslice = _grid_slice(cfg, sys_)
    grid = grid_mod.evaluate_grid(netobj, gslice)
    grid_mod.save_grid(grid, gslice, out / "grid.txt")
    reports = grid_mod.sublevel_report(grid, gammas, grid_mod.grid_cell_area(gslice))
    with open(out / "levelsets.jsonl", "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.__dict__) + "\n")
    unsafe_rect = None
    if set(sys_.unsafe.coords) == {gslice.axis_i, gslice.axis_j} and sys_.unsafe.sense == "le":
        t = dict(zip(sys_.unsafe.coords, sys_.unsafe.thresholds))
        unsafe_rect = (
            (-t[gslice.axis_i], t[gslice.axis_i]),
            (-t[gslice.axis_j], t[gslice.axis_j]),
        )
    grid_mod.render_contours_svg(grid, gslice, gammas, out / "contours.svg", unsafe_rect)
    for r in reports:
        print(f"gamma={r.gamma:g} cells={r.cell_count_below} area={r.area_estimate:.4f}")
    print(f"grid: {out / 'grid.txt'}  rendering: {out / 'contours.svg'}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, args)
    sys_, ref = build_environment(cfg)
    mode = getattr(args, "mode", None) or cfg.sim.mode
    sim_cfg = sim_mod.SimConfig(cfg.sim.x0, cfg.sim.t_final, cfg.sim.dt, mode)
    netobj = None
    if mode == sim_mod.MODE_FILTERED:
        netobj = _load_net(cfg, _checkpoint_path(out, args))
    traj = sim_mod.rollout(sys_, netobj, ref, cfg.filter, sim_cfg)
    traj_path = out / f"trajectory_{mode}.txt"
    sim_mod.save_trajectory(traj, sys_, traj_path)
    if mode == sim_mod.MODE_FILTERED:
        sim_mod.save_diagnostics(traj, sys_, ref, out / "diagnostics.jsonl")
    if traj.violation is None:
        print("violation: none")
    else:
        t, x = traj.violation
        print(f"violation: t={t:.3f} x={np.array2string(x, precision=4)}")
    if traj.left_domain is not None:
        print(f"left domain at t={traj.left_domain:.3f}")
    print(f"trajectory: {traj_path}")
    return EXIT_OK


def cmd_audit(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg, args)
    sys_, ref = build_environment(cfg)
    netobj = _load_net(cfg, _checkpoint_path(out, args))
    report = grid_mod.audit_safety_condition(
        netobj, sys_, ref, cfg.filter,
        samples=cfg.audit.samples, gamma=cfg.audit.gamma,
        seed=cfg.seed, tol=cfg.audit.tol,
    )
    with open(out / "audit.json", "w") as fh:
        json.dump(report.__dict__, fh, indent=2)
    print(
        f"audit: samples={report.n_samples} violations={report.n_violations} "
        f"fraction={report.violation_fraction:.4f} "
        f"zero_lgb_fraction={report.zero_lgb_fraction:.4f} "
        f"only_at_zero_lgb={report.violations_only_at_zero_lgb} "
        f"worst_margin={report.worst_margin:.3e}"
    )
    return EXIT_OK


def cmd_reproduce(args) -> int:
    case = args.case
    if case not in ENVIRONMENTS:
        print(
            f"unknown case {case!r}; valid cases: {', '.join(ENVIRONMENTS)}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        if cfg.environment != case:
            raise ConfigError(
                f"config environment {cfg.environment!r} does not match case {case!r}"
            )
    else:
        cfg = default_run_config(case)
    out = _out_dir(cfg, args)
    save_config(cfg, out / "config.yaml")

    def stage_args(**extra):
        base = {"out": str(out), "checkpoint": None, "gammas": None, "mode": None}
        base.update(extra)
        return argparse.Namespace(**base)

    print(f"[{case}] training")
    cmd_train(cfg, stage_args())
    print(f"[{case}] grid evaluation")
    cmd_eval_grid(cfg, stage_args())
    print(f"[{case}] simulating (reference only)")
    cmd_simulate(cfg, stage_args(mode="ref"))
    print(f"[{case}] simulating (barrier filtered)")
    cmd_simulate(cfg, stage_args(mode="filtered"))
    print(f"[{case}] auditing")
    cmd_audit(cfg, stage_args())
    summary = _summarize(cfg, out)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    lines = _summary_lines(case, summary)
    with open(out / "summary.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK


def _summarize(cfg: RunConfig, out: Path) -> dict:
    sys_, ref = build_environment(cfg)
    netobj = _load_net(cfg, out / "checkpoint.zcbf")
    rng = np.random.default_rng(cfg.seed + 1)
    fresh_safe = zubov.sample_region(sys_.domain, sys_.safe, 1000, rng)
    fresh_unsafe = zubov.sample_region(sys_.domain, sys_.unsafe, 1000, rng)
    mean_w_safe = float(np.mean(net_mod.forward_batch(netobj, fresh_safe)))
    mean_w_unsafe = float(np.mean(net_mod.forward_batch(netobj, fresh_unsafe)))
    history = [json.loads(line) for line in open(out / "train_log.jsonl")]
    levelsets = [json.loads(line) for line in open(out / "levelsets.jsonl")]
    areas = [r["area_estimate"] for r in levelsets]
    strict_increases = sum(b > a for a, b in zip(areas, areas[1:]))
    audit = json.load(open(out / "audit.json"))

    def _violated(mode):
        path = out / f"trajectory_{mode}.txt"
        data = np.loadtxt(path, ndmin=2)
        states = data[:, 1 : 1 + sys_.n]
        return bool(np.any(sys_.unsafe.contains_batch(states)))

    summary = {
        "environment": cfg.environment,
        "mean_w_safe": mean_w_safe,
        "mean_w_unsafe": mean_w_unsafe,
        "loss_epoch1": history[0]["total"] if history else None,
        "loss_final": history[-1]["total"] if history else None,
        "epochs": len(history),
        "areas": areas,
        "area_strict_increases": strict_increases,
        "ref_violation": _violated("ref"),
        "filtered_violation": _violated("filtered"),
        "audit": audit,
    }
    if cfg.environment == "unicycle":
        data = np.loadtxt(out / "trajectory_filtered.txt", ndmin=2)
        final_xy = data[-1, 1:3]
        summary["final_goal_distance"] = float(
            np.hypot(final_xy[0] - cfg.unicycle.goal[0], final_xy[1] - cfg.unicycle.goal[1])
        )
    return summary


def _summary_lines(case: str, s: dict) -> list[str]:
    def mark(ok):
        return "ok  " if ok else "FAIL"

    lines = [f"reproduction summary: {case}"]
    lines.append(
        f"[{mark(s['area_strict_increases'] >= 3)}] sublevel areas strictly grow "
        f"({s['area_strict_increases']} strict increases)"
    )
    if case == "pendulum":
        lines.append(f"[{mark(s['mean_w_safe'] < 0.15)}] mean W over safe samples "
                     f"= {s['mean_w_safe']:.4f} (< 0.15)")
        lines.append(f"[{mark(s['mean_w_unsafe'] > 0.85)}] mean W over unsafe samples "
                     f"= {s['mean_w_unsafe']:.4f} (> 0.85)")
        if s["loss_epoch1"] is not None:
            ratio = s["loss_epoch1"] / max(s["loss_final"], 1e-300)
            lines.append(f"[{mark(ratio >= 10)}] loss reduction x{ratio:.1f} (>= 10)")
    else:
        lines.append(f"mean W over safe samples = {s['mean_w_safe']:.4f}")
        lines.append(f"mean W over unsafe samples = {s['mean_w_unsafe']:.4f}")
        lines.append(f"[{mark(s['ref_violation'])}] reference-only rollout enters "
                     "the unsafe region")
        lines.append(f"[{mark(not s['filtered_violation'])}] filtered rollout avoids "
                     "the unsafe region")
        if "final_goal_distance" in s:
            lines.append(f"[{mark(s['final_goal_distance'] <= 0.2)}] final goal distance "
                         f"= {s['final_goal_distance']:.3f} (<= 0.2)")
    audit = s["audit"]
    lines.append(
        f"[{mark(audit['violations_only_at_zero_lgb'])}] audit violations only where "
        f"L_gB = 0 (fraction {audit['violation_fraction']:.4f}, "
        f"zero-L_gB fraction {audit['zero_lgb_fraction']:.4f})"
    )
    return lines


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zcbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, checkpoint=True):
        p.add_argument("--config", help=f"run config (default: ${CONFIG_ENV_VAR})")
        p.add_argument("--out", help="output directory (default: paths.out_dir)")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint path override")

    add_common(sub.add_parser("train", help="train the barrier network"),
               checkpoint=True)
    p = sub.add_parser("eval-grid", help="evaluate the net on a 2-D slice")
    add_common(p)
    p.add_argument("--gammas", help="comma-separated sublevel thresholds")
    p = sub.add_parser("simulate", help="closed-loop rollout")
    add_common(p)
    p.add_argument("--mode", choices=["ref", "filtered"], help="control mode")
    add_common(sub.add_parser("audit", help="audit the barrier condition"))
    p = sub.add_parser("reproduce", help="full pipeline for a shipped case")
    p.add_argument("case", help=f"one of: {', '.join(ENVIRONMENTS)}")
    p.add_argument("--config", help="config override for the case")
    p.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            return cmd_reproduce(args)
        cfg = _resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg, args)
        if args.command == "eval-grid":
            return cmd_eval_grid(cfg, args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "audit":
            return cmd_audit(cfg, args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except zubov.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
