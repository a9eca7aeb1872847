"""Dense evaluation of the barrier value over 2-D state slices.

Supports contour-style exports, sub-level-set area estimates at chosen
thresholds, and an empirical audit of the barrier constraint under the
filtered controller.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import barrier as barrier_mod
from . import net as net_mod
from .dynamics import ControlAffineSystem


@dataclass(frozen=True)
class GridSlice:
    """2-D slice: vary axis_i and axis_j, hold the other coordinates fixed."""

    axis_i: int
    axis_j: int
    fixed: np.ndarray  # full-length state; entries at the two axes ignored
    resolution: tuple[int, int] = (201, 201)
    ranges: tuple[tuple[float, float], tuple[float, float]] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.axis_i == self.axis_j:
            raise ValueError("slice axes must differ")
        if min(self.resolution) < 2:
            raise ValueError("resolution must be at least 2 per axis")
        object.__setattr__(self, "fixed", np.asarray(self.fixed, dtype=np.float64))

    def axes_values(self):
        (lo_i, hi_i), (lo_j, hi_j) = self.ranges
        vi = np.linspace(lo_i, hi_i, self.resolution[0])
        vj = np.linspace(lo_j, hi_j, self.resolution[1])
        return vi, vj

    def points(self) -> np.ndarray:
        vi, vj = self.axes_values()
        pts = np.tile(self.fixed, (vi.size * vj.size, 1))
        ii, jj = np.meshgrid(np.arange(vi.size), np.arange(vj.size), indexing="ij")
        pts[:, self.axis_i] = vi[ii.ravel()]
        pts[:, self.axis_j] = vj[jj.ravel()]
        return pts


def slice_for_system(sys: ControlAffineSystem, axis_i=0, axis_j=1,
                     fixed=None, resolution=(201, 201), ranges=None) -> GridSlice:
    """GridSlice with ranges defaulting to the domain box on the axes."""
    if fixed is None:
        fixed = np.zeros(sys.n)
    if ranges is None:
        ranges = (
            (float(sys.domain.lower[axis_i]), float(sys.domain.upper[axis_i])),
            (float(sys.domain.lower[axis_j]), float(sys.domain.upper[axis_j])),
        )
    return GridSlice(axis_i, axis_j, fixed, tuple(resolution), ranges)


def evaluate_grid(netobj, grid_slice: GridSlice) -> np.ndarray:
    """Barrier values at each node; rows follow axis_i, columns axis_j."""
    vals = net_mod.forward_batch(netobj, grid_slice.points())
    return vals.reshape(grid_slice.resolution)


@dataclass(frozen=True)
class LevelSetReport:
    gamma: float
    cell_count_below: int
    area_estimate: float


def sublevel_report(grid: np.ndarray, gammas, cell_area: float = 1.0) -> list[LevelSetReport]:
    """Per-threshold counts and areas of {W <= gamma}; monotone by construction."""
    gammas = list(gammas)
    if any(not (0.0 < g < 1.0) for g in gammas):
        raise ValueError("each gamma must lie in (0, 1)")
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be strictly increasing")
    out = []
    for g in gammas:
        count = int(np.count_nonzero(grid <= g))
        out.append(LevelSetReport(g, count, count * cell_area))
    return out


def grid_cell_area(grid_slice: GridSlice) -> float:
    (lo_i, hi_i), (lo_j, hi_j) = grid_slice.ranges
    ni, nj = grid_slice.resolution
    return ((hi_i - lo_i) / (ni - 1)) * ((hi_j - lo_j) / (nj - 1))


# ---------------------------------------------------------------------------
# Safety-condition audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    gamma: float
    tol: float
    n_samples: int
    n_violations: int
    violation_fraction: float
    worst_margin: float
    zero_lgb_fraction: float
    violations_only_at_zero_lgb: bool


def audit_safety_condition(netobj, sys: ControlAffineSystem, ref_ctrl, filter_cfg,
                           samples: int, gamma: float, seed: int = 0,
                           tol: float = 1e-6) -> AuditReport:
    """Check the barrier constraint under the filtered control.

    Draws ``samples`` domain states with W < gamma (rejection sampling)
    and verifies L_f B + L_g B u <= kappa h + tol at each. Reports the
    violation fraction, the worst post-filter margin, and whether every
    violation sat at a state with L_g B identically zero.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    rows = []
    have = 0
    for _ in range(1000):
        cand = rng.uniform(sys.domain.lower, sys.domain.upper, (max(4 * samples, 4096), sys.n))
        w = net_mod.forward_batch(netobj, cand)
        hit = cand[w < gamma]
        if hit.shape[0]:
            rows.append(hit)
            have += hit.shape[0]
        if have >= samples:
            break
    else:
        raise RuntimeError(f"could not find {samples} states with W < {gamma}")
    states = np.concatenate(rows, axis=0)[:samples]

    n_viol = 0
    worst = -np.inf
    zero_lgb = 0
    only_at_zero = True
    for x in states:
        u, diag = barrier_mod.filtered_control(netobj, sys, ref_ctrl, filter_cfg, x)
        lgb_zero = float(diag.lgb @ diag.lgb) == 0.0
        zero_lgb += lgb_zero
        margin = diag.lfb + float(diag.lgb @ u) - filter_cfg.kappa * diag.h
        worst = max(worst, margin)
        if margin > tol:
            n_viol += 1
            if not lgb_zero:
                only_at_zero = False
    return AuditReport(
        gamma=gamma,
        tol=tol,
        n_samples=samples,
        n_violations=n_viol,
        violation_fraction=n_viol / samples,
        worst_margin=float(worst),
        zero_lgb_fraction=zero_lgb / samples,
        violations_only_at_zero_lgb=only_at_zero,
    )


# ---------------------------------------------------------------------------
# Export and rendering
# ---------------------------------------------------------------------------


def save_grid(grid: np.ndarray, grid_slice: GridSlice, path) -> None:
    """Three header lines (axes, ranges, resolution), then the matrix."""
    (lo_i, hi_i), (lo_j, hi_j) = grid_slice.ranges
    with open(path, "w") as fh:
        fh.write(f"# axes: {grid_slice.axis_i} {grid_slice.axis_j}\n")
        fh.write(f"# ranges: {lo_i!r} {hi_i!r} {lo_j!r} {hi_j!r}\n")
        fh.write(f"# resolution: {grid.shape[0]} {grid.shape[1]}\n")
        for row in grid:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_grid(path):
    """Inverse of save_grid; returns (grid, axes, ranges)."""
    with open(path) as fh:
        axes = tuple(int(v) for v in fh.readline().split(":")[1].split())
        rr = [float(v) for v in fh.readline().split(":")[1].split()]
        ni, nj = (int(v) for v in fh.readline().split(":")[1].split())
        grid = np.loadtxt(fh)
    grid = grid.reshape(ni, nj)
    return grid, axes, ((rr[0], rr[1]), (rr[2], rr[3]))


def _marching_squares(grid, vi, vj, level):
    """Contour segments of {W = level} via per-cell edge interpolation."""
    segs = []
    ni, nj = grid.shape
    for i in range(ni - 1):
        for j in range(nj - 1):
            corners = (
                (grid[i, j], vi[i], vj[j]),
                (grid[i + 1, j], vi[i + 1], vj[j]),
                (grid[i + 1, j + 1], vi[i + 1], vj[j + 1]),
                (grid[i, j + 1], vi[i], vj[j + 1]),
            )
            pts = []
            for k in range(4):
                v0, x0, y0 = corners[k]
                v1, x1, y1 = corners[(k + 1) % 4]
                if (v0 <= level) != (v1 <= level):
                    t = (level - v0) / (v1 - v0)
                    pts.append((x0 + t * (x1 - x0), y0 + t * (y1 - y0)))
            if len(pts) >= 2:
                segs.append((pts[0], pts[1]))
            if len(pts) == 4:  # saddle cell: pair remaining crossings
                segs.append((pts[2], pts[3]))
    return segs


_PALETTE = ["#1f77b4", "#2ca02c", "#ff7f0e", "#d62728", "#9467bd", "#8c564b", "#17becf"]


def render_contours_svg(grid: np.ndarray, grid_slice: GridSlice, gammas, path,
                        unsafe_rect: Optional[tuple] = None, size: int = 560) -> None:
    """Standalone SVG with one contour per threshold value.

    ``unsafe_rect`` optionally draws ((x_lo, x_hi), (y_lo, y_hi)) in the
    slice plane. Axis i is drawn horizontally.
    """
    vi, vj = grid_slice.axes_values()
    (lo_i, hi_i), (lo_j, hi_j) = grid_slice.ranges
    pad = 40
    span = size - 2 * pad

    def to_px(x, y):
        px = pad + (x - lo_i) / (hi_i - lo_i) * span
        py = size - pad - (y - lo_j) / (hi_j - lo_j) * span
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" '
        'fill="white" stroke="black"/>',
    ]
    if unsafe_rect is not None:
        (rx0, rx1), (ry0, ry1) = unsafe_rect
        x0, y1 = to_px(rx0, ry0)
        x1, y0 = to_px(rx1, ry1)
        parts.append(
            f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{x1 - x0:.1f}" '
            f'height="{y1 - y0:.1f}" fill="#f4cccc" stroke="#d62728"/>'
        )
    for idx, g in enumerate(gammas):
        color = _PALETTE[idx % len(_PALETTE)]
        for (p0, p1) in _marching_squares(grid, vi, vj, g):
            (x0, y0), (x1, y1) = to_px(*p0), to_px(*p1)
            parts.append(
                f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                f'stroke="{color}" stroke-width="1.2"/>'
            )
        parts.append(
            f'<text x="{pad + 6}" y="{pad + 16 + 14 * idx}" font-size="12" '
            f'fill="{color}">W = {g}</text>'
        )
    parts.append(
        f'<text x="{size // 2}" y="{size - 10}" font-size="12" text-anchor="middle">'
        f"axis {grid_slice.axis_i}</text>"
    )
    parts.append(
        f'<text x="14" y="{size // 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {size // 2})">axis {grid_slice.axis_j}</text>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
