"""Fixed-step closed-loop simulation with safety diagnostics.

One control evaluation per integration step (zero-order hold), classical
RK4 in between. Violations are recorded against the declared unsafe
region but never halt the rollout, so the full path is always available
for inspection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import barrier as barrier_mod
from .dynamics import ControlAffineSystem

MODE_REFERENCE = "ref"
MODE_FILTERED = "filtered"


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    t_final: float = 10.0
    dt: float = 0.01
    mode: str = MODE_REFERENCE

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))
        if not (0.0 < self.dt <= self.t_final):
            raise ValueError("require 0 < dt <= t_final")
        if self.mode not in (MODE_REFERENCE, MODE_FILTERED):
            raise ValueError(f"mode must be '{MODE_REFERENCE}' or '{MODE_FILTERED}'")


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop rollout record.

    ``states`` has one more row than ``controls`` (terminal state has no
    control). ``violation`` is the first (time, state) entering the
    unsafe region, if any; ``left_domain`` is the first time the state
    exited the domain box, if it did.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    diagnostics: tuple
    violation: Optional[tuple[float, np.ndarray]]
    left_domain: Optional[float]


def rk4_step(fieldfn, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of dx/dt = fieldfn(x)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = np.asarray(fieldfn(x), dtype=np.float64)
    k2 = np.asarray(fieldfn(x + 0.5 * dt * k1), dtype=np.float64)
    k3 = np.asarray(fieldfn(x + 0.5 * dt * k2), dtype=np.float64)
    k4 = np.asarray(fieldfn(x + dt * k3), dtype=np.float64)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise ValueError("field produced a non-finite step")
    return out


def rollout(sys: ControlAffineSystem, netobj, ref_ctrl, filter_cfg,
            sim_cfg: SimConfig) -> Trajectory:
    """Simulate under reference-only or barrier-filtered control."""
    if sim_cfg.mode == MODE_FILTERED and (netobj is None or filter_cfg is None):
        raise ValueError("filtered mode requires a trained net and a filter config")
    x = np.asarray(sim_cfg.x0, dtype=np.float64).copy()
    if x.shape != (sys.n,):
        raise ValueError(f"x0 must have shape ({sys.n},)")
    n_steps = int(round(sim_cfg.t_final / sim_cfg.dt))
    times = np.arange(n_steps + 1) * sim_cfg.dt
    states = np.empty((n_steps + 1, sys.n))
    controls = np.empty((n_steps, sys.m))
    diags = []
    violation = None
    left_domain = None
    states[0] = x
    if sys.unsafe.contains(x):
        violation = (0.0, x.copy())
    for k in range(n_steps):
        if sim_cfg.mode == MODE_FILTERED:
            u, diag = barrier_mod.filtered_control(netobj, sys, ref_ctrl, filter_cfg, x)
            diags.append(diag)
        else:
            u = np.asarray(ref_ctrl(x), dtype=np.float64)
        controls[k] = u
        x = rk4_step(lambda z: np.asarray(sys.f(z)) + np.asarray(sys.g(z)) @ u, x, sim_cfg.dt)
        states[k + 1] = x
        t_next = times[k + 1]
        if violation is None and sys.unsafe.contains(x):
            violation = (float(t_next), x.copy())
        if left_domain is None and not sys.domain.contains(x):
            left_domain = float(t_next)
    return Trajectory(times, states, controls, tuple(diags), violation, left_domain)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def save_trajectory(traj: Trajectory, sys: ControlAffineSystem, path) -> None:
    """Delimited-text export, one row per step.

    Columns: t, the state coordinates, then the control channels; the
    terminal row carries nan controls. Filtered rollouts append the
    per-step diagnostics (W, B, h, s, corrected).
    """
    has_diag = len(traj.diagnostics) > 0
    cols = ["t"] + [f"x{i}" for i in range(sys.n)] + [f"u{j}" for j in range(sys.m)]
    if has_diag:
        cols += ["W", "B", "h", "s", "corrected"]
    n_steps = traj.controls.shape[0]
    with open(path, "w") as fh:
        fh.write("# " + " ".join(cols) + "\n")
        for k in range(n_steps + 1):
            row = [traj.times[k], *traj.states[k]]
            if k < n_steps:
                row += list(traj.controls[k])
            else:
                row += [np.nan] * sys.m
            if has_diag:
                if k < n_steps:
                    d = traj.diagnostics[k]
                    row += [d.W, d.B, d.h, d.s, float(d.corrected)]
                else:
                    row += [np.nan] * 5
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_diagnostics(traj: Trajectory, sys: ControlAffineSystem, ref_ctrl, path) -> None:
    """Line-delimited JSON diagnostics stream (filtered rollouts)."""
    import json

    with open(path, "w") as fh:
        for k, d in enumerate(traj.diagnostics):
            x = traj.states[k]
            rec = {
                "t": float(traj.times[k]),
                "x": [float(v) for v in x],
                "u_ref": [float(v) for v in np.atleast_1d(ref_ctrl(x))],
                "u": [float(v) for v in traj.controls[k]],
                "W": d.W,
                "B": d.B,
                "h": d.h,
                "s": d.s,
                "corrected": d.corrected,
            }
            fh.write(json.dumps(rec) + "\n")
