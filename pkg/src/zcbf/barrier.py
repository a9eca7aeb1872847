"""Reciprocal barrier recovery and the minimal-norm safety filter.

The trained bounded value W is inverted to an unbounded barrier
B = atanh(W') / alpha (W' clamped into [0, 1 - w_clamp) so the filter is
total on the whole domain), h = 1/B feeds the constraint right-hand
side, and reference controls are corrected either by the closed-form
minimal-norm adjustment or by an exact box-constrained QP.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import net as net_mod
from .dynamics import ControlAffineSystem

H_CAP = 1e-9  # floor on B before taking h = 1/B


@dataclass(frozen=True)
class SafetyFilterConfig:
    """Filter parameters; alpha must equal the training alpha."""

    alpha: float = 1.0
    kappa: float = 1.0
    epsilon: float = 1e-6
    w_clamp: float = 1e-3
    u_bounds: Optional[np.ndarray] = None  # (m, 2) rows [lo, hi]

    def __post_init__(self):
        if self.alpha <= 0.0 or self.kappa <= 0.0:
            raise ValueError("alpha and kappa must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if not (0.0 < self.w_clamp < 0.5):
            raise ValueError("w_clamp must lie in (0, 0.5)")
        if self.u_bounds is not None:
            ub = np.asarray(self.u_bounds, dtype=np.float64)
            if ub.ndim != 2 or ub.shape[1] != 2 or np.any(ub[:, 0] >= ub[:, 1]):
                raise ValueError("u_bounds must be (m, 2) with lo < hi per row")
            object.__setattr__(self, "u_bounds", ub)


@dataclass(frozen=True)
class FilterDiagnostics:
    W: float
    B: float
    h: float
    s: float
    lfb: float
    lgb: np.ndarray
    corrected: bool
    clipped: bool = False
    infeasible: bool = False


def w_to_b(w: float, alpha: float, w_clamp: float = 1e-3) -> float:
    """Invert the bounded value to the reciprocal barrier.

    B = (1 / 2 alpha) ln((1 + W') / (1 - W')) with W' = clip(W, 0, 1 - w_clamp),
    so the result is finite and monotone nondecreasing for all inputs.
    """
    wc = min(max(float(w), 0.0), 1.0 - w_clamp)
    return float(np.arctanh(wc) / alpha)


def h_from_b(b: float) -> float:
    """h = 1/B with B floored at 1e-9, capping h at 1e9."""
    return 1.0 / max(float(b), H_CAP)


def _db_dw(w: float, alpha: float, w_clamp: float) -> float:
    # derivative of the clamped inversion; zero on the flat clamped ranges
    if w < 0.0 or w > 1.0 - w_clamp:
        return 0.0
    return 1.0 / (alpha * (1.0 - w * w))


def lie_derivatives(netobj, sys: ControlAffineSystem, cfg: SafetyFilterConfig, x):
    """(L_f B, L_g B) at x via the chain rule through the inversion."""
    dual = net_mod.forward_with_input_grad(netobj, x)
    scale = _db_dw(dual.value, cfg.alpha, cfg.w_clamp)
    grad_b = scale * dual.input_grad
    x = np.asarray(x, dtype=np.float64)
    lfb = float(grad_b @ np.asarray(sys.f(x), dtype=np.float64))
    lgb = grad_b @ np.asarray(sys.g(x), dtype=np.float64)
    return lfb, lgb


def safety_measure(lfb: float, lgb, u_ref, kappa: float, h: float) -> float:
    """s = L_f B + L_g B . u_ref - kappa h; positive means intervention."""
    return float(lfb + np.dot(np.atleast_1d(lgb), np.atleast_1d(u_ref)) - kappa * h)


def min_norm_correction(s: float, lgb, epsilon: float) -> np.ndarray:
    """Closed-form minimal-norm adjustment; zero when s <= 0."""
    lgb = np.atleast_1d(np.asarray(lgb, dtype=np.float64))
    if s <= 0.0:
        return np.zeros_like(lgb)
    return (-s / (float(lgb @ lgb) + epsilon)) * lgb


def filtered_control(netobj, sys: ControlAffineSystem, ref_ctrl,
                     cfg: SafetyFilterConfig, x):
    """Reference control with the minimal-norm safety correction applied.

    Returns (u, diagnostics); diagnostics.corrected is set exactly when
    the measure was positive and a usable correction direction existed.
    """
    x = np.asarray(x, dtype=np.float64)
    dual = net_mod.forward_with_input_grad(netobj, x)
    w = dual.value
    b = w_to_b(w, cfg.alpha, cfg.w_clamp)
    h = h_from_b(b)
    scale = _db_dw(w, cfg.alpha, cfg.w_clamp)
    grad_b = scale * dual.input_grad
    lfb = float(grad_b @ np.asarray(sys.f(x), dtype=np.float64))
    lgb = grad_b @ np.asarray(sys.g(x), dtype=np.float64)
    u_ref = np.asarray(ref_ctrl(x), dtype=np.float64)
    s = safety_measure(lfb, lgb, u_ref, cfg.kappa, h)
    du = min_norm_correction(s, lgb, cfg.epsilon)
    u = u_ref + du
    clipped = False
    if cfg.u_bounds is not None:
        u_clip = np.clip(u, cfg.u_bounds[:, 0], cfg.u_bounds[:, 1])
        clipped = bool(np.any(u_clip != u))
        u = u_clip
    corrected = bool(s > 0.0 and float(lgb @ lgb) > 0.0)
    return u, FilterDiagnostics(w, b, h, s, lfb, lgb, corrected, clipped)


# ---------------------------------------------------------------------------
# Exact QP variant
# ---------------------------------------------------------------------------


def _qp_box_halfspace(r, a, b, bounds):
    """argmin ||u - r||^2 s.t. a.u <= b and optional box; m <= 2.

    Returns (u, infeasible). With no box this is the exact projection
    onto the halfspace. Infeasible means no box point satisfies the
    constraint; the returned point then minimizes a.u (least violation).
    """
    r = np.asarray(r, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    m = r.shape[0]
    if bounds is None:
        lo = np.full(m, -np.inf)
        hi = np.full(m, np.inf)
    else:
        lo, hi = bounds[:, 0], bounds[:, 1]
    u0 = np.clip(r, lo, hi)
    na2 = float(a @ a)
    if na2 == 0.0:
        return u0, bool(b < 0.0)
    if float(a @ u0) <= b:
        return u0, False
    if m == 1:
        # constraint boundary is the single point b/a
        cut = b / a[0]
        if a[0] > 0.0:
            if cut < lo[0]:
                return np.array([lo[0]]), True
            return np.array([min(max(r[0], lo[0]), min(hi[0], cut))]), False
        if cut > hi[0]:
            return np.array([hi[0]]), True
        return np.array([min(max(r[0], max(lo[0], cut)), hi[0])]), False
    # m == 2: optimum lies on the segment {a.u = b} within the box
    u_plane = r - ((float(a @ r) - b) / na2) * a
    # segment of the line u_plane + t * d inside the box, d orthogonal to a
    d = np.array([-a[1], a[0]]) / np.sqrt(na2)
    t_lo, t_hi = -np.inf, np.inf
    for j in range(2):
        if d[j] == 0.0:
            if not (lo[j] - 1e-12 <= u_plane[j] <= hi[j] + 1e-12):
                t_lo, t_hi = np.inf, -np.inf
                break
            continue
        c1 = (lo[j] - u_plane[j]) / d[j]
        c2 = (hi[j] - u_plane[j]) / d[j]
        t_lo = max(t_lo, min(c1, c2))
        t_hi = min(t_hi, max(c1, c2))
    if t_lo > t_hi:
        # constraint unreachable inside the box: minimize a.u over the box
        u_best = np.where(a > 0.0, lo, np.where(a < 0.0, hi, u0))
        u_best = np.clip(u_best, lo, hi)
        return u_best, True
    # u_plane is the unconstrained minimizer on the line (t = 0 projection
    # of r); clamp its parameter into the box segment
    t = min(max(0.0, t_lo), t_hi)
    return np.clip(u_plane + t * d, lo, hi), False


def qp_filtered_control(netobj, sys: ControlAffineSystem, ref_ctrl,
                        cfg: SafetyFilterConfig, x):
    """Exact minimizer of ||u - u_ref||^2 under the barrier constraint
    and optional box bounds; returns (u, diagnostics)."""
    x = np.asarray(x, dtype=np.float64)
    dual = net_mod.forward_with_input_grad(netobj, x)
    w = dual.value
    b_val = w_to_b(w, cfg.alpha, cfg.w_clamp)
    h = h_from_b(b_val)
    scale = _db_dw(w, cfg.alpha, cfg.w_clamp)
    grad_b = scale * dual.input_grad
    lfb = float(grad_b @ np.asarray(sys.f(x), dtype=np.float64))
    lgb = grad_b @ np.asarray(sys.g(x), dtype=np.float64)
    u_ref = np.asarray(ref_ctrl(x), dtype=np.float64)
    s = safety_measure(lfb, lgb, u_ref, cfg.kappa, h)
    u, infeasible = _qp_box_halfspace(u_ref, lgb, cfg.kappa * h - lfb, cfg.u_bounds)
    corrected = bool(s > 0.0 and float(lgb @ lgb) > 0.0)
    return u, FilterDiagnostics(w, b_val, h, s, lfb, lgb, corrected, False, infeasible)
