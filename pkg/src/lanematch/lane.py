"""Row-anchored lane representation and strip-overlap IoUs.

A lane is stored as one x-coordinate per sample row of a fixed vertical
grid. Row 0 is the image bottom; the last row is the image top.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import (
    DegenerateLaneError,
    GridMismatchError,
    LaneMatchError,
    UndefinedIoUError,
    check_same_grid,
    check_unit_interval,
)

# Line-IoU half width is 7.5 px at an 800 px wide model input.
REFERENCE_WIDTH = 800.0
REFERENCE_HALF_WIDTH = 7.5
THETA_FIT_ROWS = 5


@dataclass(frozen=True)
class RowGrid:
    n_rows: int = 72
    img_h: float = 590
    img_w: float = 1640

    def __post_init__(self):
        if int(self.n_rows) != self.n_rows or self.n_rows < 2:
            raise LaneMatchError(f"n_rows must be an integer >= 2, got {self.n_rows}")
        if not (self.img_h > 0 and self.img_w > 0):
            raise LaneMatchError("image dimensions must be positive")

    @property
    def ys(self):
        step = (self.img_h - 1) / (self.n_rows - 1)
        ys = (self.img_h - 1) - np.arange(self.n_rows) * step
        ys[-1] = 0.0
        return ys

    @property
    def default_half_width(self):
        return REFERENCE_HALF_WIDTH * self.img_w / REFERENCE_WIDTH


@dataclass(frozen=True)
class IoUParams:
    line_half_width: float = REFERENCE_HALF_WIDTH
    mask_width: float = 30.0
    canvas_w: int = 1640
    canvas_h: int = 590

    def __post_init__(self):
        for name in ("line_half_width", "mask_width", "canvas_w", "canvas_h"):
            if not getattr(self, name) > 0:
                raise LaneMatchError(f"{name} must be strictly positive")


@dataclass(frozen=True, eq=False)
class Lane:
    """A lane sampled on ``grid``.

    Use :meth:`from_rows` or :func:`resample` rather than the raw
    constructor; they derive the start point, angle and length.
    Invalid rows hold NaN in ``xs``.
    """

    xs: np.ndarray
    valid: np.ndarray
    grid: RowGrid
    score: float
    start_x: float
    start_y: float
    theta: float
    length: int
    _run: tuple = field(repr=False, default=(0, 0))

    @classmethod
    def from_rows(cls, xs, valid, grid, score=1.0):
        xs = np.asarray(xs, dtype=np.float64).copy()
        valid = np.asarray(valid, dtype=bool).copy()
        if xs.shape != (grid.n_rows,) or valid.shape != (grid.n_rows,):
            raise LaneMatchError(
                f"xs and valid must have length {grid.n_rows}, "
                f"got {xs.shape} and {valid.shape}"
            )
        score = check_unit_interval(score, "score")
        valid &= np.isfinite(xs)
        idx = np.flatnonzero(valid)
        if idx.size == 0:
            raise DegenerateLaneError("lane has no valid rows")
        first, last = int(idx[0]), int(idx[-1])
        if idx.size != last - first + 1:
            raise LaneMatchError("valid rows of a lane must be contiguous")
        xs[~valid] = np.nan
        xs[valid] = np.clip(xs[valid], 0.0, grid.img_w - 1)
        ys = grid.ys
        theta = _start_angle(xs[first:last + 1], ys[first:last + 1])
        xs.flags.writeable = False
        valid.flags.writeable = False
        return cls(
            xs=xs,
            valid=valid,
            grid=grid,
            score=score,
            start_x=float(xs[first]),
            start_y=float(ys[first]),
            theta=theta,
            length=int(idx.size),
            _run=(first, last + 1),
        )

    @property
    def run(self):
        """Half-open ``(first, stop)`` range of valid row indices."""
        return self._run

    def points(self):
        """Valid (x, y) samples, bottom to top, as an ``(n, 2)`` array."""
        first, stop = self._run
        return np.column_stack([self.xs[first:stop], self.grid.ys[first:stop]])

    def params(self):
        return (self.start_x, self.start_y, self.theta, float(self.length))

    def with_score(self, score):
        return Lane.from_rows(self.xs, self.valid, self.grid, score)


def _start_angle(xs, ys):
    """Angle to the x-axis of a least-squares line through the lowest rows."""
    n = min(THETA_FIT_ROWS, xs.size)
    if n < 2:
        return math.pi / 2
    x, y = xs[:n], ys[:n]
    dy = y - y.mean()
    slope = float(np.dot(dy, x - x.mean()) / np.dot(dy, dy))  # dx/dy
    # Moving one pixel up the image shifts x by -slope.
    theta = math.atan2(1.0, -slope)
    return theta % math.pi


def resample(polyline, grid, score=1.0):
    """Interpolate a pixel polyline onto the rows of ``grid``."""
    pts = np.asarray(polyline, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateLaneError("a polyline needs at least two points")
    uy, inverse = np.unique(pts[:, 1], return_inverse=True)
    if uy.size < 2:
        raise DegenerateLaneError("all polyline points share one y coordinate")
    ux = np.bincount(inverse.ravel(), weights=pts[:, 0]) / np.bincount(inverse.ravel())
    ys = grid.ys
    tol = 1e-9
    valid = (ys >= uy[0] - tol) & (ys <= uy[-1] + tol)
    if not valid.any():
        raise DegenerateLaneError("polyline does not span any grid row")
    xs = np.full(grid.n_rows, np.nan)
    xs[valid] = np.interp(ys[valid], uy, ux)
    return Lane.from_rows(xs, valid, grid, score)


def _stack(lanes):
    return (
        np.stack([lane.xs for lane in lanes]),
        np.stack([lane.valid for lane in lanes]),
    )


def slope_factors(lane, cap=10.0):
    """Per-row width scale sqrt(1 + (dx/dy)^2), capped at ``cap``; 1 on invalid rows."""
    factors = np.ones(lane.grid.n_rows)
    first, stop = lane.run
    if stop - first < 2:
        return factors
    x = lane.xs[first:stop]
    y = lane.grid.ys[first:stop]
    dxdy = np.empty_like(x)
    dxdy[1:-1] = (x[2:] - x[:-2]) / (y[2:] - y[:-2])
    dxdy[0] = (x[1] - x[0]) / (y[1] - y[0])
    dxdy[-1] = (x[-1] - x[-2]) / (y[-1] - y[-2])
    factors[first:stop] = np.minimum(np.sqrt(1.0 + dxdy**2), cap)
    return factors


def _strip_iou(xa, va, wa, xb, vb, wb):
    """Strip-overlap IoU over the trailing row axis; inputs broadcast."""
    both = va & vb
    only = va ^ vb
    with np.errstate(invalid="ignore"):
        inter = np.minimum(xa + wa, xb + wb) - np.maximum(xa - wa, xb - wb)
        union = np.maximum(xa + wa, xb + wb) - np.minimum(xa - wa, xb - wb)
    inter = np.where(both, np.maximum(inter, 0.0), 0.0)
    # A row present in one lane only adds that lane's full strip to the union.
    lone = np.where(va, 2.0 * wa, 2.0 * wb)
    union = np.where(both, union, np.where(only, lone, 0.0))
    denom = union.sum(axis=-1)
    if np.any(denom <= 0):
        raise UndefinedIoUError("IoU is undefined for lanes without valid rows")
    return np.clip(inter.sum(axis=-1) / denom, 0.0, 1.0)


def _resolve_half_width(grid, half_width):
    hw = grid.default_half_width if half_width is None else float(half_width)
    if not hw > 0:
        raise LaneMatchError("half_width must be strictly positive")
    return hw


def line_iou(a, b, half_width=None):
    """LineIoU of two lanes with fixed-width horizontal strips."""
    grid = check_same_grid(a, b)
    w = _resolve_half_width(grid, half_width)
    return float(_strip_iou(a.xs, a.valid, w, b.xs, b.valid, w))


def line_iou_matrix(preds, gts, half_width=None):
    """Pairwise LineIoU, shape ``(len(preds), len(gts))``."""
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    grid = check_same_grid(*preds, *gts)
    w = _resolve_half_width(grid, half_width)
    px, pv = _stack(preds)
    gx, gv = _stack(gts)
    return _strip_iou(px[:, None], pv[:, None], w, gx[None], gv[None], w)


def lane_iou(a, b, half_width=None, max_slope_factor=10.0):
    """LaneIoU: LineIoU with strip widths scaled by each lane's local slope."""
    grid = check_same_grid(a, b)
    w = _resolve_half_width(grid, half_width)
    wa = w * slope_factors(a, max_slope_factor)
    wb = w * slope_factors(b, max_slope_factor)
    return float(_strip_iou(a.xs, a.valid, wa, b.xs, b.valid, wb))


def lane_iou_matrix(preds, gts, half_width=None, max_slope_factor=10.0):
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    grid = check_same_grid(*preds, *gts)
    w = _resolve_half_width(grid, half_width)
    px, pv = _stack(preds)
    gx, gv = _stack(gts)
    pw = w * np.stack([slope_factors(p, max_slope_factor) for p in preds])
    gw = w * np.stack([slope_factors(g, max_slope_factor) for g in gts])
    return _strip_iou(
        px[:, None], pv[:, None], pw[:, None], gx[None], gv[None], gw[None]
    )


__all__ = [
    "RowGrid",
    "IoUParams",
    "Lane",
    "resample",
    "slope_factors",
    "line_iou",
    "line_iou_matrix",
    "lane_iou",
    "lane_iou_matrix",
    "GridMismatchError",
]
