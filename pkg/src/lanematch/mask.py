"""Stroke rasterization of lanes and segmentation-mask IoU.

A stroke covers every integer pixel centre within ``width / 2`` of the
polyline (round caps and joins). Masks are kept sparse as sorted flat
pixel indices ``y * canvas_w + x``.
"""
import numpy as np

from ._validation import UndefinedIoUError, check_positive
from .lane import IoUParams

_EPS = 1e-9


def _ragged_arange(lo, hi):
    """Concatenated ``arange(lo[i], hi[i] + 1)`` plus the owner index of each entry."""
    sizes = np.maximum(hi - lo + 1, 0)
    owner = np.repeat(np.arange(len(sizes)), sizes)
    offset = np.arange(int(sizes.sum())) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    return lo[owner] + offset, owner


def _row_sections(p0, p1, y, r):
    """x-interval of each segment's stroke (capsule) on the horizontal line ``y``.

    The capsule is convex, so its section is the hull of the sections of the
    two end disks and of the band swept along the segment.
    """
    inf = np.inf
    lo = np.full(y.shape, inf)
    hi = np.full(y.shape, -inf)
    for c in (p0, p1):
        h2 = r * r - (y - c[:, 1]) ** 2
        half = np.sqrt(np.maximum(h2, 0.0))
        lo = np.where(h2 >= 0, np.minimum(lo, c[:, 0] - half), lo)
        hi = np.where(h2 >= 0, np.maximum(hi, c[:, 0] + half), hi)

    d = p1 - p0
    dx, dy = d[:, 0], d[:, 1]
    length = np.hypot(dx, dy)
    ry = y - p0[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        # Perpendicular distance <= r.
        a = (dx * ry - r * length) / dy
        b = (dx * ry + r * length) / dy
        perp_lo = np.where(dy != 0, np.minimum(a, b), np.where(np.abs(dx * ry) <= r * length, -inf, inf))
        perp_hi = np.where(dy != 0, np.maximum(a, b), np.where(np.abs(dx * ry) <= r * length, inf, -inf))
        # Projection parameter within [0, 1].
        a = -dy * ry / dx
        b = (length**2 - dy * ry) / dx
        proj_lo = np.where(dx != 0, np.minimum(a, b), np.where((ry * dy >= 0) & (ry * dy <= length**2), -inf, inf))
        proj_hi = np.where(dx != 0, np.maximum(a, b), np.where((ry * dy >= 0) & (ry * dy <= length**2), inf, -inf))
    band_lo = p0[:, 0] + np.maximum(perp_lo, proj_lo)
    band_hi = p0[:, 0] + np.minimum(perp_hi, proj_hi)
    band = (length > 0) & (band_lo <= band_hi)
    lo = np.where(band, np.minimum(lo, band_lo), lo)
    hi = np.where(band, np.maximum(hi, band_hi), hi)
    return lo, hi


def rasterize_polyline(points, width, canvas_w, canvas_h):
    """Return the sorted flat indices of pixels covered by the stroke."""
    check_positive(width, "width")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    empty = np.empty(0, dtype=np.int64)
    if len(pts) == 0:
        return empty
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    r = np.sqrt((width / 2.0) ** 2 + _EPS)
    p0, p1 = pts[:-1], pts[1:]
    row_lo = np.maximum(np.ceil(np.minimum(p0[:, 1], p1[:, 1]) - r), 0).astype(np.int64)
    row_hi = np.minimum(np.floor(np.maximum(p0[:, 1], p1[:, 1]) + r), canvas_h - 1).astype(np.int64)
    rows, seg = _ragged_arange(row_lo, row_hi)
    if rows.size == 0:
        return empty
    lo, hi = _row_sections(p0[seg], p1[seg], rows.astype(np.float64), r)
    x_lo = np.maximum(np.ceil(lo), 0)
    x_hi = np.minimum(np.floor(hi), canvas_w - 1)
    keep = x_lo <= x_hi
    rows, x_lo, x_hi = rows[keep], x_lo[keep].astype(np.int64), x_hi[keep].astype(np.int64)
    if rows.size == 0:
        return empty
    # Merge overlapping or touching runs within each row.
    order = np.lexsort((x_lo, rows))
    rows, x_lo, x_hi = rows[order], x_lo[order], x_hi[order]
    stride = canvas_w + 2
    key_lo = rows * stride + x_lo
    run_hi = np.maximum.accumulate(rows * stride + x_hi)
    starts = np.ones(len(rows), dtype=bool)
    starts[1:] = key_lo[1:] > run_hi[:-1] + 1
    first = np.flatnonzero(starts)
    last = np.append(first[1:], len(rows)) - 1
    merged_lo = key_lo[first]
    merged_hi = run_hi[last]
    flat_rows = merged_lo // stride
    pix, owner = _ragged_arange(merged_lo, merged_hi)
    return flat_rows[owner] * canvas_w + (pix - flat_rows[owner] * stride)


def lane_mask(lane, params=None):
    params = params or IoUParams()
    return rasterize_polyline(
        lane.points(), params.mask_width, params.canvas_w, params.canvas_h
    )


def mask_iou(mask_a, mask_b):
    """IoU of two sparse masks produced by :func:`rasterize_polyline`."""
    if mask_a.size == 0 and mask_b.size == 0:
        raise UndefinedIoUError("both masks are empty")
    if mask_a.size > mask_b.size:
        mask_a, mask_b = mask_b, mask_a
    pos = np.searchsorted(mask_b, mask_a)
    inter = int(np.count_nonzero(mask_b[np.minimum(pos, mask_b.size - 1)] == mask_a)) if mask_b.size else 0
    return inter / (mask_a.size + mask_b.size - inter)


def seg_mask_iou(a, b, params=None):
    return mask_iou(lane_mask(a, params), lane_mask(b, params))


def mask_to_image(mask, canvas_w, canvas_h):
    """Dense boolean ``(canvas_h, canvas_w)`` image of a sparse mask."""
    img = np.zeros(canvas_h * canvas_w, dtype=bool)
    img[mask] = True
    return img.reshape(canvas_h, canvas_w)
