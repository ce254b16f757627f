"""Assignment costs and pair losses.

The geometric terms are similarity scores in [0, 1] (1 = perfect), so the
default negative geometric weight makes lower totals better matches.
"""
from dataclasses import dataclass
import math

import numpy as np

from ._validation import LaneMatchError, check_same_grid
from .lane import lane_iou_matrix, line_iou_matrix


@dataclass(frozen=True)
class CostWeights:
    lambda0: float = -3.0
    lambda1: float = 1.0
    lambda_eq2: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    prob_epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.prob_epsilon < 0.5:
            raise LaneMatchError("prob_epsilon must lie in (0, 0.5)")
        if not 0.0 < self.focal_alpha < 1.0:
            raise LaneMatchError("focal_alpha must lie in (0, 1)")
        if self.focal_gamma < 0:
            raise LaneMatchError("focal_gamma must be non-negative")


DEFAULT_WEIGHTS = CostWeights()


@dataclass(frozen=True)
class CostBreakdown:
    c_dis: float
    c_theta: float
    c_xy: float
    c_cls: float
    line_iou: float
    total: float


def _geometric(preds, gts):
    """Similarity terms for all pairs, shape ``(P, G, 3)``."""
    grid = check_same_grid(*preds, *gts)
    px = np.stack([p.xs for p in preds])[:, None]
    gx = np.stack([g.xs for g in gts])[None]
    common = np.stack([p.valid for p in preds])[:, None] & np.stack([g.valid for g in gts])[None]
    n_common = common.sum(axis=-1)
    diff = np.where(common, np.abs(px - gx), 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_dx = np.where(n_common > 0, diff / np.maximum(n_common, 1), np.nan)
    c_dis = np.where(n_common > 0, 1.0 - np.clip(mean_dx / grid.img_w, 0.0, 1.0), 0.0)

    p_theta = np.array([p.theta for p in preds])[:, None]
    g_theta = np.array([g.theta for g in gts])[None]
    c_theta = 1.0 - np.clip(np.abs(p_theta - g_theta) / math.pi, 0.0, 1.0)

    p_sx = np.array([p.start_x for p in preds])[:, None]
    g_sx = np.array([g.start_x for g in gts])[None]
    p_sy = np.array([p.start_y for p in preds])[:, None]
    g_sy = np.array([g.start_y for g in gts])[None]
    d_xy = (np.abs(p_sx - g_sx) / grid.img_w + np.abs(p_sy - g_sy) / grid.img_h) / 2.0
    c_xy = 1.0 - np.clip(d_xy, 0.0, 1.0)
    return np.stack([c_dis, c_theta, c_xy], axis=-1)


def geometric_scores(pred, gt):
    """``(c_dis, c_theta, c_xy)`` similarity scores for one pair."""
    return tuple(float(v) for v in _geometric([pred], [gt])[0, 0])


def geometric_score_matrix(preds, gts):
    return _geometric(preds, gts)


def focal_cost(p, positive=True, weights=DEFAULT_WEIGHTS):
    """Signed focal matching cost: positive-target term minus the negative-target term.

    Decreasing in ``p`` for a positive target. Accepts scalars or arrays.
    """
    eps = weights.prob_epsilon
    a, g = weights.focal_alpha, weights.focal_gamma
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    pos = a * (1.0 - p) ** g * -np.log(p)
    neg = (1.0 - a) * p**g * -np.log(1.0 - p)
    cost = pos - neg if positive else neg - pos
    return float(cost) if cost.ndim == 0 else cost


def focal_loss(p, weights=DEFAULT_WEIGHTS):
    """Plain focal loss for a positive target (non-negative)."""
    eps = weights.prob_epsilon
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    loss = weights.focal_alpha * (1.0 - p) ** weights.focal_gamma * -np.log(p)
    return float(loss) if loss.ndim == 0 else loss


def classical_cost_matrix(preds, gts, weights=DEFAULT_WEIGHTS, half_width=None):
    """Total classical costs and LineIoUs, each shape ``(P, G)``."""
    if not preds or not gts:
        empty = np.zeros((len(preds), len(gts)))
        return empty, empty.copy()
    geo = _geometric(preds, gts).sum(axis=-1)
    cls = focal_cost(np.array([p.score for p in preds]), True, weights)
    total = weights.lambda0 * geo + weights.lambda1 * np.atleast_1d(cls)[:, None]
    return total, line_iou_matrix(preds, gts, half_width)


def classical_cost(pred, gt, weights=DEFAULT_WEIGHTS, half_width=None):
    c_dis, c_theta, c_xy = geometric_scores(pred, gt)
    c_cls = focal_cost(pred.score, True, weights)
    total = weights.lambda0 * (c_dis + c_theta + c_xy) + weights.lambda1 * c_cls
    liou = float(line_iou_matrix([pred], [gt], half_width)[0, 0])
    return CostBreakdown(c_dis, c_theta, c_xy, c_cls, liou, total)


def laneiou_cost(pred, gt, weights=DEFAULT_WEIGHTS, half_width=None):
    """LaneIoU-based matching cost: ``-LaneIoU + lambda_eq2 * focal_cost``."""
    iou = float(lane_iou_matrix([pred], [gt], half_width)[0, 0])
    return -iou + weights.lambda_eq2 * focal_cost(pred.score, True, weights)


def pair_loss_matrix(preds, gts, lambda_cls=1.0, weights=DEFAULT_WEIGHTS, half_width=None):
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    liou = line_iou_matrix(preds, gts, half_width)
    fl = np.atleast_1d(focal_loss(np.array([p.score for p in preds]), weights))
    return (1.0 - liou) + lambda_cls * fl[:, None]


def pair_loss(pred, gt, lambda_cls=1.0, weights=DEFAULT_WEIGHTS, half_width=None):
    """Detector feedback loss for one pair: LineIoU loss plus weighted focal loss."""
    return float(pair_loss_matrix([pred], [gt], lambda_cls, weights, half_width)[0, 0])


def smooth_l1(pred_params, gt_params, grid, beta=1.0):
    """Mean smooth-L1 over normalized ``(x0, y0, theta, length)``."""
    if not beta > 0:
        raise LaneMatchError("beta must be positive")
    scale = np.array([grid.img_w, grid.img_h, math.pi, grid.n_rows], dtype=np.float64)
    r = np.abs(np.asarray(pred_params, float) - np.asarray(gt_params, float)) / scale
    per = np.where(r < beta, 0.5 * r**2 / beta, r - 0.5 * beta)
    return float(per.mean())
