"""Seeded synthetic lane scenes standing in for a detector's prediction stream.

GT lanes are quadratics ``x(y) = a (y - y0)^2 + b (y - y0) + c`` anchored at
the image bottom ``y0``. Predictions are noisy copies of the GTs (per-point
jitter, a global offset and a linear drift, all scaled by ``noise_sigma``);
decoys are unrelated lanes. Confidence follows a simple teacher model::

    score = clip(conf_base + coupling * LineIoU(pred, gt) + N(0, conf_noise), 0, 1)
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import DegenerateLaneError, LaneMatchError
from .lane import RowGrid, line_iou, resample

VERTEX_STEP = 10.0


@dataclass(frozen=True)
class SynthConfig:
    n_scenes: int = 100
    lanes_min: int = 2
    lanes_max: int = 4
    curv_min: float = -8e-4
    curv_max: float = 8e-4
    preds_min: int = 2
    preds_max: int = 6
    noise_sigma: float = 4.0
    offset_ratio: float = 3.0
    decoys_min: int = 2
    decoys_max: int = 8
    conf_base: float = 0.1
    conf_coupling: float = 0.8
    conf_noise: float = 0.08
    decoy_coupling: float = 0.2
    curve_threshold: float = 3e-4
    canvas_w: int = 1640
    canvas_h: int = 590
    seed: int = 0

    def __post_init__(self):
        ranges = [(self.lanes_min, self.lanes_max), (self.curv_min, self.curv_max),
                  (self.preds_min, self.preds_max), (self.decoys_min, self.decoys_max)]
        if any(lo > hi for lo, hi in ranges):
            raise LaneMatchError("synthetic config ranges must be nonempty (min <= max)")
        if self.lanes_min < 0 or self.preds_min < 0 or self.decoys_min < 0:
            raise LaneMatchError("counts must be non-negative")
        if self.noise_sigma < 0 or self.conf_noise < 0:
            raise LaneMatchError("noise levels must be non-negative")
        if self.n_scenes < 0:
            raise LaneMatchError("n_scenes must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class SceneRecord:
    image_id: str
    gt_lanes: list
    pred_lanes: list  # (polyline, score)
    category: str = None
    curvatures: list = field(default_factory=list)


def _clip_to_canvas(pts, w):
    """Longest prefix from the bottom whose x stays on the canvas."""
    inside = (pts[:, 0] >= 0) & (pts[:, 0] <= w - 1)
    stop = len(pts) if inside.all() else int(np.argmin(inside))
    return pts[:stop]


def _quadratic(a, b, c, y0, y_end):
    ys = np.arange(y0, y_end - 1e-9, -VERTEX_STEP)
    if ys[-1] != y_end:
        ys = np.append(ys, y_end)
    d = ys - y0
    return np.column_stack([a * d * d + b * d + c, ys])


def _gt_lane(rng, cfg, slot, n_lanes):
    w, h = cfg.canvas_w, cfg.canvas_h
    y0 = h - 1.0
    y_vanish = 0.33 * h
    for _ in range(20):
        c = w * (slot + 1) / (n_lanes + 1) + rng.uniform(-0.05, 0.05) * w
        b = (c - w / 2) / (y0 - y_vanish) + rng.uniform(-0.15, 0.15)
        a = rng.uniform(cfg.curv_min, cfg.curv_max)
        y_end = rng.uniform(0.38, 0.5) * h
        pts = _clip_to_canvas(_quadratic(a, b, c, y0, y_end), w)
        if len(pts) >= 3:
            return pts, a
    # Vertical fallback always fits.
    return _quadratic(0.0, 0.0, w / 2, y0, 0.45 * h), 0.0


def _perturb(rng, pts, cfg):
    sigma = cfg.noise_sigma
    if sigma == 0:
        return pts.copy()
    out = pts.copy()
    t = (pts[0, 1] - pts[:, 1]) / max(pts[0, 1] - pts[-1, 1], 1.0)
    offset = rng.normal(0.0, sigma * cfg.offset_ratio)
    drift = rng.normal(0.0, sigma * cfg.offset_ratio)
    out[:, 0] += offset + drift * t + rng.normal(0.0, sigma, size=len(pts))
    return out


def _confidence(rng, base, coupling, iou, noise_std):
    noise = rng.normal(0.0, noise_std) if noise_std > 0 else 0.0
    return float(np.clip(base + coupling * iou + noise, 0.0, 1.0))


def gen_scene(rng, cfg, image_id, grid=None):
    grid = grid or RowGrid(72, cfg.canvas_h, cfg.canvas_w)
    n_lanes = int(rng.integers(cfg.lanes_min, cfg.lanes_max + 1))
    gts, curvatures = [], []
    for slot in range(n_lanes):
        pts, a = _gt_lane(rng, cfg, slot, n_lanes)
        gts.append(pts)
        curvatures.append(a)
    gt_lanes = [resample(p, grid) for p in gts]

    preds = []
    for pts, gt_lane in zip(gts, gt_lanes):
        for _ in range(int(rng.integers(cfg.preds_min, cfg.preds_max + 1))):
            noisy = _clip_to_canvas(_perturb(rng, pts, cfg), cfg.canvas_w)
            if len(noisy) < 2:
                continue
            iou = line_iou(resample(noisy, grid), gt_lane)
            preds.append((noisy, _confidence(rng, cfg.conf_base, cfg.conf_coupling, iou, cfg.conf_noise)))
    for _ in range(int(rng.integers(cfg.decoys_min, cfg.decoys_max + 1))):
        pts, _a = _gt_lane(rng, cfg, int(rng.integers(0, 4)), 4)
        pts = _clip_to_canvas(_perturb(rng, pts, cfg) + [rng.normal(0, 0.08 * cfg.canvas_w), 0.0],
                              cfg.canvas_w)
        if len(pts) < 2:
            continue
        decoy = resample(pts, grid)
        iou = max((line_iou(decoy, g) for g in gt_lanes), default=0.0)
        preds.append((pts, _confidence(rng, cfg.conf_base, cfg.decoy_coupling, iou, cfg.conf_noise)))
    order = rng.permutation(len(preds))
    preds = [(preds[i][0].tolist(), preds[i][1]) for i in order]
    curved = any(abs(a) >= cfg.curve_threshold for a in curvatures)
    return SceneRecord(
        image_id=image_id,
        gt_lanes=[p.tolist() for p in gts],
        pred_lanes=preds,
        category="curve" if curved else "normal",
        curvatures=curvatures,
    )


PRESETS = {
    "default": {},
    # One clean prediction per GT: the pair-level targets are learnable exactly.
    "separable": dict(preds_min=1, preds_max=1, noise_sigma=1.5, offset_ratio=1.0, conf_noise=0.05),
    "curve": dict(curv_min=-1e-3, curv_max=1e-3),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise LaneMatchError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SynthConfig(**{**PRESETS[name], **overrides})


def gen_synthetic(cfg):
    rng = np.random.default_rng(cfg.seed)
    grid = RowGrid(72, cfg.canvas_h, cfg.canvas_w)
    return [gen_scene(rng, cfg, f"scene_{i:05d}", grid) for i in range(cfg.n_scenes)]


def record_lanes(record, grid=None):
    """Resample a record's polylines onto ``grid``; returns ``(preds, gts)``.

    Polylines that cover no grid row are dropped.
    """
    grid = grid or RowGrid()
    gts, preds = [], []
    for pts in record.gt_lanes:
        try:
            gts.append(resample(pts, grid))
        except DegenerateLaneError:
            pass
    for pts, score in record.pred_lanes:
        try:
            preds.append(resample(pts, grid, score))
        except DegenerateLaneError:
            pass
    return preds, gts


def separable_pairs(n_samples, pairs_per_sample=18, seed=0):
    """Feature-space samples that a pair classifier can separate exactly.

    Positives have ``f_liou > 0.7`` and ``f_dis < 0.1``; negatives have
    ``f_liou < 0.2``. The remaining features are uniform noise.
    Returns a list of ``(X, y)`` with ``y`` in {0, 1}.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_samples):
        n_pos = int(rng.integers(1, 7))
        X = rng.uniform(0.0, 1.0, size=(pairs_per_sample, 6))
        y = np.zeros(pairs_per_sample)
        y[:n_pos] = 1.0
        X[:n_pos, 5] = rng.uniform(0.7, 1.0, size=n_pos)
        X[:n_pos, 0] = rng.uniform(0.0, 0.1, size=n_pos)
        X[n_pos:, 5] = rng.uniform(0.0, 0.2, size=pairs_per_sample - n_pos)
        perm = rng.permutation(pairs_per_sample)
        samples.append((X[perm], y[perm]))
    return samples
