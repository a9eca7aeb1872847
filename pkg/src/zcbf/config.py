"""Run configuration: one YAML file drives every subcommand.

Every constant the method leaves open (alpha, kappa, epsilon, loss
weights, controller gains, quadrotor region geometry) lives here so a
run is reproducible from the file alone. Validation errors name the
offending key, e.g. "train.alpha must be positive".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .barrier import SafetyFilterConfig
from .dynamics import (
    ControlAffineSystem,
    DomainBox,
    QuadrotorGains,
    make_quadrotor_reference,
    make_unicycle_reference,
    pendulum_system,
    quadrotor_system,
    unicycle_system,
    zero_reference,
)
from .sim import SimConfig
from .zubov import TrainConfig

ENVIRONMENTS = ("pendulum", "unicycle", "quadrotor")
DEFAULT_GAMMAS = (0.2, 0.4, 0.6, 0.8, 0.9, 0.95)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class GridConfig:
    axis_i: int = 0
    axis_j: int = 1
    fixed: Optional[tuple[float, ...]] = None  # None: zeros
    resolution: tuple[int, int] = (201, 201)
    ranges: Optional[tuple] = None  # None: domain box on the slice axes
    gammas: tuple[float, ...] = DEFAULT_GAMMAS


@dataclass(frozen=True)
class AuditConfig:
    samples: int = 10000
    gamma: float = 0.9
    tol: float = 1e-6


@dataclass(frozen=True)
class UnicycleParams:
    v: float = 0.5
    goal: tuple[float, float] = (1.0, 1.0)
    gain: float = 6.0


@dataclass(frozen=True)
class QuadrotorParams:
    target: tuple[float, ...] = (1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    gains: QuadrotorGains = field(default_factory=QuadrotorGains)
    domain_lower: Optional[tuple[float, ...]] = None
    domain_upper: Optional[tuple[float, ...]] = None
    safe_thresholds: tuple[float, float] = (1.2, 1.2)
    unsafe_thresholds: tuple[float, float] = (0.2, 0.2)


@dataclass(frozen=True)
class RunConfig:
    environment: str
    seed: int
    train: TrainConfig
    filter: SafetyFilterConfig
    sim: SimConfig
    grid: GridConfig
    audit: AuditConfig
    out_dir: str
    unicycle: UnicycleParams = field(default_factory=UnicycleParams)
    quadrotor: QuadrotorParams = field(default_factory=QuadrotorParams)


_DEFAULT_X0 = {
    "pendulum": (0.0, 0.0),
    "unicycle": (-1.5, -1.5, np.pi / 4.0),
    "quadrotor": (-1.5, -1.5, 0.0, 0.0, 0.0, 0.0),
}
_DEFAULT_HIDDEN = {"pendulum": (16, 16), "unicycle": (16, 16), "quadrotor": (32, 32)}


def default_run_config(environment: str, out_dir: Optional[str] = None) -> RunConfig:
    """Shipped defaults for one environment."""
    if environment not in ENVIRONMENTS:
        raise ConfigError(
            f"environment must be one of {', '.join(ENVIRONMENTS)}, got {environment!r}"
        )
    train = TrainConfig(hidden_dims=_DEFAULT_HIDDEN[environment])
    return RunConfig(
        environment=environment,
        seed=0,
        train=train,
        filter=SafetyFilterConfig(alpha=train.alpha),
        sim=SimConfig(x0=np.array(_DEFAULT_X0[environment]), t_final=10.0, dt=0.01,
                      mode="filtered"),
        grid=GridConfig(),
        audit=AuditConfig(),
        out_dir=out_dir or f"runs/{environment}",
    )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _check_keys(d: dict, allowed, path: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown config key {path}.{k}" if path else f"unknown config key {k}")


def _number(d, key, path, default, *, positive=False, non_negative=False, integer=False):
    raw = d.get(key, default)
    try:
        val = int(raw) if integer else float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key} must be a number") from None
    if integer and float(raw) != val:
        raise ConfigError(f"{path}.{key} must be an integer")
    if positive and val <= 0:
        raise ConfigError(f"{path}.{key} must be positive")
    if non_negative and val < 0:
        raise ConfigError(f"{path}.{key} must be non-negative")
    return val


def _parse_train(d: dict) -> TrainConfig:
    path = "train"
    _check_keys(d, {"alpha", "hidden_dims", "loss_weights", "n_interior", "n_boundary",
                    "n_safe", "n_unsafe", "batch_size", "learning_rate", "max_epochs",
                    "loss_threshold", "seed"}, path)
    weights = d.get("loss_weights", {})
    if not isinstance(weights, dict):
        raise ConfigError("train.loss_weights must be a mapping")
    _check_keys(weights, {"residual", "boundary", "safe", "unsafe"}, "train.loss_weights")
    lw = tuple(
        _number(weights, k, "train.loss_weights", dflt, positive=True)
        for k, dflt in (("residual", 1.0), ("boundary", 1.0), ("safe", 5.0), ("unsafe", 5.0))
    )
    hidden = d.get("hidden_dims", [16, 16])
    try:
        hidden = tuple(int(h) for h in hidden)
    except (TypeError, ValueError):
        raise ConfigError("train.hidden_dims must be a list of integers") from None
    if not hidden or any(h < 1 for h in hidden):
        raise ConfigError("train.hidden_dims entries must be positive")
    return TrainConfig(
        alpha=_number(d, "alpha", path, 1.0, positive=True),
        loss_weights=lw,
        hidden_dims=hidden,
        n_interior=_number(d, "n_interior", path, 10000, positive=True, integer=True),
        n_boundary=_number(d, "n_boundary", path, 2000, positive=True, integer=True),
        n_safe=_number(d, "n_safe", path, 2000, positive=True, integer=True),
        n_unsafe=_number(d, "n_unsafe", path, 2000, positive=True, integer=True),
        batch_size=_number(d, "batch_size", path, 512, positive=True, integer=True),
        learning_rate=_number(d, "learning_rate", path, 1e-3, positive=True),
        max_epochs=_number(d, "max_epochs", path, 2000, non_negative=True, integer=True),
        loss_threshold=_number(d, "loss_threshold", path, 1e-5, non_negative=True),
        seed=_number(d, "seed", path, 0, integer=True),
    )


def _parse_filter(d: dict, train_alpha: float) -> SafetyFilterConfig:
    path = "filter"
    _check_keys(d, {"alpha", "kappa", "epsilon", "w_clamp", "u_bounds"}, path)
    alpha = _number(d, "alpha", path, train_alpha, positive=True)
    if alpha != train_alpha:
        raise ConfigError(
            f"filter.alpha ({alpha}) must equal train.alpha ({train_alpha}); "
            "the barrier inversion is only consistent with the training transform"
        )
    u_bounds = d.get("u_bounds")
    if u_bounds is not None:
        try:
            u_bounds = np.asarray(u_bounds, dtype=np.float64)
        except (TypeError, ValueError):
            raise ConfigError("filter.u_bounds must be a list of [lo, hi] pairs") from None
    try:
        return SafetyFilterConfig(
            alpha=alpha,
            kappa=_number(d, "kappa", path, 1.0, positive=True),
            epsilon=_number(d, "epsilon", path, 1e-6, non_negative=True),
            w_clamp=_number(d, "w_clamp", path, 1e-3, positive=True),
            u_bounds=u_bounds,
        )
    except ValueError as exc:
        raise ConfigError(f"filter: {exc}") from None


def _parse_sim(d: dict, environment: str) -> SimConfig:
    path = "sim"
    _check_keys(d, {"x0", "t_final", "dt", "mode"}, path)
    x0 = d.get("x0", list(_DEFAULT_X0[environment]))
    mode = d.get("mode", "filtered")
    if mode not in ("ref", "filtered"):
        raise ConfigError("sim.mode must be 'ref' or 'filtered'")
    try:
        return SimConfig(
            x0=np.asarray(x0, dtype=np.float64),
            t_final=_number(d, "t_final", path, 10.0, positive=True),
            dt=_number(d, "dt", path, 0.01, positive=True),
            mode=mode,
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None


def _parse_grid(d: dict) -> GridConfig:
    path = "grid"
    _check_keys(d, {"axis_i", "axis_j", "fixed", "resolution", "ranges", "gammas"}, path)
    gammas = tuple(float(g) for g in d.get("gammas", DEFAULT_GAMMAS))
    if any(not (0.0 < g < 1.0) for g in gammas):
        raise ConfigError("grid.gammas entries must lie in (0, 1)")
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ConfigError("grid.gammas must be strictly increasing")
    res = d.get("resolution", (201, 201))
    resolution = (int(res[0]), int(res[1]))
    if min(resolution) < 2:
        raise ConfigError("grid.resolution must be at least 2 per axis")
    fixed = d.get("fixed")
    ranges = d.get("ranges")
    return GridConfig(
        axis_i=_number(d, "axis_i", path, 0, non_negative=True, integer=True),
        axis_j=_number(d, "axis_j", path, 1, non_negative=True, integer=True),
        fixed=None if fixed is None else tuple(float(v) for v in fixed),
        resolution=resolution,
        ranges=None if ranges is None else tuple((float(a), float(b)) for a, b in ranges),
        gammas=gammas,
    )


def _parse_audit(d: dict) -> AuditConfig:
    path = "audit"
    _check_keys(d, {"samples", "gamma", "tol"}, path)
    gamma = _number(d, "gamma", path, 0.9, positive=True)
    if not gamma < 1.0:
        raise ConfigError("audit.gamma must lie in (0, 1)")
    return AuditConfig(
        samples=_number(d, "samples", path, 10000, positive=True, integer=True),
        gamma=gamma,
        tol=_number(d, "tol", path, 1e-6, positive=True),
    )


def _parse_unicycle(d: dict) -> UnicycleParams:
    path = "unicycle"
    _check_keys(d, {"v", "goal", "gain"}, path)
    goal = d.get("goal", (1.0, 1.0))
    return UnicycleParams(
        v=_number(d, "v", path, 0.5, positive=True),
        goal=(float(goal[0]), float(goal[1])),
        gain=_number(d, "gain", path, 6.0, positive=True),
    )


def _parse_quadrotor(d: dict) -> QuadrotorParams:
    path = "quadrotor"
    _check_keys(d, {"target", "gains", "domain_lower", "domain_upper",
                    "safe_thresholds", "unsafe_thresholds"}, path)
    gains_d = d.get("gains", {})
    _check_keys(gains_d, {"kp_pos", "kd_pos", "kp_att", "kd_att"}, "quadrotor.gains")
    try:
        gains = QuadrotorGains(
            kp_pos=_number(gains_d, "kp_pos", "quadrotor.gains", 1.2, non_negative=True),
            kd_pos=_number(gains_d, "kd_pos", "quadrotor.gains", 1.8, non_negative=True),
            kp_att=_number(gains_d, "kp_att", "quadrotor.gains", 60.0, non_negative=True),
            kd_att=_number(gains_d, "kd_att", "quadrotor.gains", 16.0, non_negative=True),
        )
    except ValueError as exc:
        raise ConfigError(f"quadrotor.gains: {exc}") from None
    target = d.get("target", (1.0, 1.0, 0.0, 0.0, 0.0, 0.0))
    lo = d.get("domain_lower")
    hi = d.get("domain_upper")
    safe_t = d.get("safe_thresholds", (1.2, 1.2))
    unsafe_t = d.get("unsafe_thresholds", (0.2, 0.2))
    return QuadrotorParams(
        target=tuple(float(v) for v in target),
        gains=gains,
        domain_lower=None if lo is None else tuple(float(v) for v in lo),
        domain_upper=None if hi is None else tuple(float(v) for v in hi),
        safe_thresholds=(float(safe_t[0]), float(safe_t[1])),
        unsafe_thresholds=(float(unsafe_t[0]), float(unsafe_t[1])),
    )


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, {"environment", "seed", "train", "filter", "sim", "grid",
                      "audit", "paths", "unicycle", "quadrotor"}, "")
    env = raw.get("environment")
    if env not in ENVIRONMENTS:
        raise ConfigError(
            f"environment must be one of {', '.join(ENVIRONMENTS)}, got {env!r}"
        )
    seed = _number(raw, "seed", "", 0, integer=True)
    train_d = raw.get("train", {}) or {}
    if "seed" not in train_d:
        train_d = {**train_d, "seed": seed}
    train = _parse_train(train_d)
    paths_d = raw.get("paths", {}) or {}
    _check_keys(paths_d, {"out_dir"}, "paths")
    out_dir = str(paths_d.get("out_dir", f"runs/{env}"))
    return RunConfig(
        environment=env,
        seed=seed,
        train=train,
        filter=_parse_filter(raw.get("filter", {}) or {}, train.alpha),
        sim=_parse_sim(raw.get("sim", {}) or {}, env),
        grid=_parse_grid(raw.get("grid", {}) or {}),
        audit=_parse_audit(raw.get("audit", {}) or {}),
        out_dir=out_dir,
        unicycle=_parse_unicycle(raw.get("unicycle", {}) or {}),
        quadrotor=_parse_quadrotor(raw.get("quadrotor", {}) or {}),
    )


def config_to_dict(cfg: RunConfig) -> dict:
    t = cfg.train
    f = cfg.filter
    return {
        "environment": cfg.environment,
        "seed": cfg.seed,
        "train": {
            "alpha": t.alpha,
            "hidden_dims": list(t.hidden_dims),
            "loss_weights": {
                "residual": t.loss_weights[0],
                "boundary": t.loss_weights[1],
                "safe": t.loss_weights[2],
                "unsafe": t.loss_weights[3],
            },
            "n_interior": t.n_interior,
            "n_boundary": t.n_boundary,
            "n_safe": t.n_safe,
            "n_unsafe": t.n_unsafe,
            "batch_size": t.batch_size,
            "learning_rate": t.learning_rate,
            "max_epochs": t.max_epochs,
            "loss_threshold": t.loss_threshold,
            "seed": t.seed,
        },
        "filter": {
            "alpha": f.alpha,
            "kappa": f.kappa,
            "epsilon": f.epsilon,
            "w_clamp": f.w_clamp,
            "u_bounds": None if f.u_bounds is None else [list(r) for r in f.u_bounds],
        },
        "sim": {
            "x0": [float(v) for v in cfg.sim.x0],
            "t_final": cfg.sim.t_final,
            "dt": cfg.sim.dt,
            "mode": cfg.sim.mode,
        },
        "grid": {
            "axis_i": cfg.grid.axis_i,
            "axis_j": cfg.grid.axis_j,
            "fixed": None if cfg.grid.fixed is None else list(cfg.grid.fixed),
            "resolution": list(cfg.grid.resolution),
            "ranges": None if cfg.grid.ranges is None else [list(r) for r in cfg.grid.ranges],
            "gammas": list(cfg.grid.gammas),
        },
        "audit": {
            "samples": cfg.audit.samples,
            "gamma": cfg.audit.gamma,
            "tol": cfg.audit.tol,
        },
        "paths": {"out_dir": cfg.out_dir},
        "unicycle": {
            "v": cfg.unicycle.v,
            "goal": list(cfg.unicycle.goal),
            "gain": cfg.unicycle.gain,
        },
        "quadrotor": {
            "target": list(cfg.quadrotor.target),
            "gains": {
                "kp_pos": cfg.quadrotor.gains.kp_pos,
                "kd_pos": cfg.quadrotor.gains.kd_pos,
                "kp_att": cfg.quadrotor.gains.kp_att,
                "kd_att": cfg.quadrotor.gains.kd_att,
            },
            "domain_lower": None if cfg.quadrotor.domain_lower is None
            else list(cfg.quadrotor.domain_lower),
            "domain_upper": None if cfg.quadrotor.domain_upper is None
            else list(cfg.quadrotor.domain_upper),
            "safe_thresholds": list(cfg.quadrotor.safe_thresholds),
            "unsafe_thresholds": list(cfg.quadrotor.unsafe_thresholds),
        },
    }


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    return config_from_dict(raw or {})


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


def build_environment(cfg: RunConfig):
    """Instantiate the configured system and its reference controller."""
    if cfg.environment == "pendulum":
        sys_ = pendulum_system()
        return sys_, zero_reference(sys_.m)
    if cfg.environment == "unicycle":
        sys_ = unicycle_system(cfg.unicycle.v)
        return sys_, make_unicycle_reference(cfg.unicycle.goal, cfg.unicycle.gain)
    lo, hi = cfg.quadrotor.domain_lower, cfg.quadrotor.domain_upper
    domain = None
    if lo is not None or hi is not None:
        if lo is None or hi is None:
            raise ConfigError("quadrotor.domain_lower and domain_upper must be set together")
        domain = DomainBox(np.asarray(lo), np.asarray(hi))
    sys_ = quadrotor_system(domain, cfg.quadrotor.safe_thresholds,
                            cfg.quadrotor.unsafe_thresholds)
    return sys_, make_quadrotor_reference(np.asarray(cfg.quadrotor.target),
                                          cfg.quadrotor.gains)
