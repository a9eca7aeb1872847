"""Control-affine systems, state regions, and the shipped environments.

Every system is a pair of pure functions (drift ``f``, input matrix ``g``)
over a rectangular state domain, plus declared safe/unsafe regions used as
training anchors. Three environments ship: an inverted pendulum, a
constant-speed unicycle, and a planar quadrotor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

GRAVITY = 9.81


def wrap_angle(a):
    """Wrap an angle in radians to the interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box in state space; lower[i] < upper[i] required."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lower and upper must be 1-D vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("each lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)


@dataclass(frozen=True)
class RegionSpec:
    """Region described by per-coordinate absolute-value thresholds.

    ``sense='le'`` tests |x_c| <= t_c, ``sense='ge'`` tests |x_c| >= t_c,
    and ``combine`` joins the per-coordinate tests with 'all' or 'any'.
    The shipped safe boxes are all/le, the shipped unsafe patterns are
    any/ge (pendulum) and all/le (navigation obstacles).
    """

    kind: str  # "safe" | "unsafe"
    combine: str  # "all" | "any"
    sense: str  # "le" | "ge"
    coords: tuple[int, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("safe", "unsafe"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.combine not in ("all", "any"):
            raise ValueError(f"unknown combine mode {self.combine!r}")
        if self.sense not in ("le", "ge"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if len(self.coords) != len(self.thresholds):
            raise ValueError("coords and thresholds must have equal length")

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=np.float64)
        tests = [
            abs(float(x[c])) <= t if self.sense == "le" else abs(float(x[c])) >= t
            for c, t in zip(self.coords, self.thresholds)
        ]
        return all(tests) if self.combine == "all" else any(tests)

    def contains_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cols = np.abs(x[:, list(self.coords)])
        thr = np.asarray(self.thresholds)
        tests = cols <= thr if self.sense == "le" else cols >= thr
        return np.all(tests, axis=1) if self.combine == "all" else np.any(tests, axis=1)

    def distance_sq(self, x: np.ndarray) -> float:
        """Squared Euclidean distance from x to the region (0 inside).

        Closed form for every combine/sense pairing: coordinates are
        independent, so 'all' sums per-coordinate deficits and 'any'
        takes the cheapest single coordinate to fix.
        """
        return float(self.distance_sq_batch(np.asarray(x)[None, :])[0])

    def distance_sq_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cols = np.abs(x[:, list(self.coords)])
        thr = np.asarray(self.thresholds)
        if self.sense == "le":
            deficit = np.maximum(cols - thr, 0.0)
        else:
            deficit = np.maximum(thr - cols, 0.0)
        sq = deficit * deficit
        if self.combine == "all":
            return np.sum(sq, axis=1)
        return np.min(sq, axis=1)


def region_contains(region: RegionSpec, x: np.ndarray) -> bool:
    """True iff x satisfies the region predicate."""
    return region.contains(x)


@dataclass(frozen=True)
class ControlAffineSystem:
    """System dx/dt = f(x) + g(x) u with declared regions and domain.

    ``f`` and ``g`` must be pure; ``g`` returns an (n, m) matrix.
    ``safe_anchor`` is the set against which squared distances are taken
    when forcing the training residual (defaults to the safe region).
    ``boundary_safe_barrier`` optionally supplies an analytic barrier
    candidate for domain-boundary points inside the safe region; the
    shipped environments leave it unset, which pins the boundary target
    to 1 everywhere.
    """

    name: str
    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    domain: DomainBox
    safe: RegionSpec
    unsafe: RegionSpec
    safe_anchor: RegionSpec = None  # type: ignore[assignment]
    boundary_safe_barrier: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        if self.safe_anchor is None:
            object.__setattr__(self, "safe_anchor", self.safe)
        if self.domain.n != self.n:
            raise ValueError("domain dimension does not match state dimension")


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------


def pendulum_system() -> ControlAffineSystem:
    """Inverted pendulum, state [theta, theta_dot], autonomous (g == 0).

    The dynamics carry no input channel, so the input matrix is the zero
    n-by-1 matrix and any safety filter degenerates to a pass-through.
    """

    def f(x):
        return np.array([x[1], np.sin(x[0])])

    def g(x):
        return np.zeros((2, 1))

    return ControlAffineSystem(
        name="pendulum",
        n=2,
        m=1,
        f=f,
        g=g,
        domain=DomainBox(np.array([-np.pi, -8.0]), np.array([np.pi, 8.0])),
        safe=RegionSpec("safe", "all", "le", (0, 1), (np.pi / 8.0, 1.0)),
        unsafe=RegionSpec("unsafe", "any", "ge", (0, 1), (np.pi / 2.0, 4.0)),
    )


def unicycle_system(v: float = 0.5) -> ControlAffineSystem:
    """Constant-speed unicycle, state [x1, x2, psi], heading-rate input."""
    if v <= 0.0:
        raise ValueError("forward speed v must be positive")
    v = float(v)

    def f(x):
        return np.array([v * np.cos(x[2]), v * np.sin(x[2]), 0.0])

    def g(x):
        return np.array([[0.0], [0.0], [1.0]])

    return ControlAffineSystem(
        name="unicycle",
        n=3,
        m=1,
        f=f,
        g=g,
        domain=DomainBox(np.array([-2.0, -2.0, -np.pi]), np.array([2.0, 2.0, np.pi])),
        safe=RegionSpec("safe", "any", "ge", (0, 1), (1.5, 1.5)),
        unsafe=RegionSpec("unsafe", "all", "le", (0, 1), (0.2, 0.2)),
    )


def quadrotor_system(
    domain: Optional[DomainBox] = None,
    safe_thresholds: tuple[float, float] = (1.2, 1.2),
    unsafe_thresholds: tuple[float, float] = (0.2, 0.2),
) -> ControlAffineSystem:
    """Planar quadrotor, state [y, z, phi, v_y, v_z, phi_dot], two rotors.

    Region geometry follows the navigation pattern (central rectangular
    obstacle, outer ring declared safe) and is overridable.
    """

    def f(x):
        return np.array([x[3], x[4], x[5], 0.0, -GRAVITY, 0.0])

    def g(x):
        s, c = np.sin(x[2]), np.cos(x[2])
        return np.array(
            [
                [0.0, 0.0],
                [0.0, 0.0],
                [0.0, 0.0],
                [-s, -s],
                [c, c],
                [1.0, -1.0],
            ]
        )

    if domain is None:
        domain = DomainBox(
            np.array([-2.0, -2.0, -np.pi / 3.0, -2.0, -2.0, -2.0]),
            np.array([2.0, 2.0, np.pi / 3.0, 2.0, 2.0, 2.0]),
        )
    return ControlAffineSystem(
        name="quadrotor",
        n=6,
        m=2,
        f=f,
        g=g,
        domain=domain,
        safe=RegionSpec("safe", "any", "ge", (0, 1), tuple(safe_thresholds)),
        unsafe=RegionSpec("unsafe", "all", "le", (0, 1), tuple(unsafe_thresholds)),
    )


# ---------------------------------------------------------------------------
# Reference controllers
# ---------------------------------------------------------------------------


def zero_reference(m: int) -> Callable[[np.ndarray], np.ndarray]:
    """Controller that always returns the zero input (m channels)."""

    def u_ref(x):
        return np.zeros(m)

    return u_ref


def unicycle_reference(x: np.ndarray, goal=(1.0, 1.0), gain: float = 3.0) -> np.ndarray:
    """Heading-error proportional steering toward a fixed planar goal.

    Uses the two-argument arctangent and wraps the error to (-pi, pi] so
    the command is quadrant-correct and free of the +-pi discontinuity.
    """
    if gain <= 0.0:
        raise ValueError("gain must be positive")
    err = np.arctan2(goal[1] - x[1], goal[0] - x[0]) - x[2]
    return np.array([gain * wrap_angle(err)])


def make_unicycle_reference(goal=(1.0, 1.0), gain: float = 3.0):
    goal = (float(goal[0]), float(goal[1]))
    if gain <= 0.0:
        raise ValueError("gain must be positive")

    def u_ref(x):
        return unicycle_reference(x, goal=goal, gain=gain)

    return u_ref


@dataclass(frozen=True)
class QuadrotorGains:
    """Cascaded position/attitude gains for the quadrotor reference.

    The position loop turns tracking error into a desired acceleration,
    which is converted to a thrust magnitude and pitch command; the
    attitude loop tracks that pitch. All gains must be non-negative
    (all-zero gains reduce the controller to the hover feedforward).
    """

    kp_pos: float = 1.2
    kd_pos: float = 1.8
    kp_att: float = 60.0
    kd_att: float = 16.0

    def __post_init__(self):
        for name in ("kp_pos", "kd_pos", "kp_att", "kd_att"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


def quadrotor_reference(
    x: np.ndarray,
    target: np.ndarray = None,
    gains: QuadrotorGains = QuadrotorGains(),
) -> np.ndarray:
    """Two-rotor reference command steering toward a hover target.

    Outer loop: desired planar acceleration from position/velocity error,
    plus gravity compensation, giving a thrust magnitude and desired
    pitch. Inner loop: pitch-rate command tracking that pitch. At the
    target with zero gains or zero error the output is the hover
    feedforward [g/2, g/2].
    """
    if target is None:
        target = np.array([1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    y, z, phi, vy, vz, phidot = x
    ay = gains.kp_pos * (target[0] - y) - gains.kd_pos * vy
    az = gains.kp_pos * (target[1] - z) - gains.kd_pos * vz
    # force vector the rotors must realize: (F_y, F_z) = (ay, az + g)
    fy = ay
    fz = az + GRAVITY
    thrust = np.hypot(fy, fz)
    # v_y responds as -T sin(phi), so the pitch realizing (fy, fz) is:
    phi_des = np.arctan2(-fy, fz)
    torque = gains.kp_att * wrap_angle(phi_des - phi) - gains.kd_att * phidot
    return np.array([0.5 * (thrust + torque), 0.5 * (thrust - torque)])


def make_quadrotor_reference(target=None, gains: QuadrotorGains = QuadrotorGains()):
    if target is None:
        target = np.array([1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    target = np.asarray(target, dtype=np.float64)

    def u_ref(x):
        return quadrotor_reference(x, target=target, gains=gains)

    return u_ref
