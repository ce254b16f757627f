"""CULane-style F1 evaluation with rasterized lane masks."""
from dataclasses import dataclass, field
import io

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import LaneMatchError, check_unit_interval
from .lane import IoUParams
from .mask import lane_mask, mask_iou

HIST_BINS = 20
ALL = "all"
CROSS = "cross"


@dataclass(frozen=True)
class EvalConfig:
    conf_threshold: float = 0.40
    iou_thresholds: tuple = (0.5, 0.75)
    mask_width: float = 30.0
    canvas_w: int = 1640
    canvas_h: int = 590

    def __post_init__(self):
        check_unit_interval(self.conf_threshold, "conf_threshold")
        for t in self.iou_thresholds:
            check_unit_interval(t, "iou threshold", open_=True)
        if not (self.canvas_w > 0 and self.canvas_h > 0 and self.mask_width > 0):
            raise LaneMatchError("canvas and mask width must be positive")

    @property
    def iou_params(self):
        return IoUParams(mask_width=self.mask_width, canvas_w=self.canvas_w,
                         canvas_h=self.canvas_h)


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list
    total_iou: float


def f1_score(precision, recall):
    if precision == 0 and recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def iou_matrix(preds, gts, cfg=None):
    """Mask IoU for every (prediction, GT) pair."""
    cfg = cfg or EvalConfig()
    params = cfg.iou_params
    pm = [lane_mask(p, params) for p in preds]
    gm = [lane_mask(g, params) for g in gts]
    out = np.zeros((len(preds), len(gts)))
    for i, a in enumerate(pm):
        for j, b in enumerate(gm):
            if a.size or b.size:
                out[i, j] = mask_iou(a, b)
    return out


def match_ious(ious, t_iou):
    """One-to-one matching with the most pairs above ``t_iou``, ties to larger total IoU."""
    ious = np.asarray(ious, dtype=np.float64)
    P, G = ious.shape
    if P == 0 or G == 0:
        return MatchResult(0, P, G, [], 0.0)
    ok = ious > t_iou
    # Each qualifying pair is worth one match plus its IoU; the match term dominates.
    weight = np.where(ok, (min(P, G) + 1.0) + ious, 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if ok[r, c]]
    tp = len(pairs)
    total = float(sum(ious[r, c] for r, c in pairs))
    return MatchResult(tp, P - tp, G - tp, pairs, total)


def filter_confident(preds, conf_threshold):
    return [p for p in preds if p.score >= conf_threshold]


def match_image(preds, gts, cfg=None, t_iou=0.5):
    """Counts for one image; ``pairs`` index into the confidence-filtered predictions."""
    cfg = cfg or EvalConfig()
    kept = filter_confident(preds, cfg.conf_threshold)
    return match_ious(iou_matrix(kept, gts, cfg), t_iou)


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, tp, fp, fn):
        self.tp += tp
        self.fp += fp
        self.fn += fn

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        return f1_score(self.precision, self.recall)


def confidence_histogram(scores, bins=HIST_BINS):
    """Counts over equal-width bins on [0, 1]; 1.0 falls in the last bin."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.asarray(scores, dtype=np.float64), bins=edges)
    return edges, counts


@dataclass
class EvalReport:
    counts: dict = field(default_factory=dict)  # (category, t_iou) -> Counts
    hist_edges: np.ndarray = None
    hist_counts: np.ndarray = None

    def get(self, category, t_iou):
        return self.counts[(category, t_iou)]

    def f1(self, category=ALL, t_iou=0.5):
        return self.get(category, t_iou).f1

    def to_text(self):
        out = io.StringIO()
        out.write("category t_iou tp fp fn precision recall f1\n")
        for (cat, t), c in self.counts.items():
            out.write(f"{cat} {t:.2f} {c.tp} {c.fp} {c.fn} "
                      f"{c.precision:.6f} {c.recall:.6f} {c.f1:.6f}\n")
        return out.getvalue()

    def histogram_csv(self):
        return histogram_csv(self.hist_edges, self.hist_counts)


def histogram_csv(edges, counts):
    total = counts.sum()
    out = io.StringIO()
    out.write("bin_low,bin_high,count,normalized_count\n")
    for lo, hi, n in zip(edges[:-1], edges[1:], counts):
        norm = n / total if total else 0.0
        out.write(f"{lo:.2f},{hi:.2f},{int(n)},{norm:.6f}\n")
    return out.getvalue()


def evaluate_dataset(pred_source, gt_source, category_lists=None, cfg=None):
    """Aggregate F1 counts over a dataset.

    ``pred_source`` and ``gt_source`` map image id to lists of lanes;
    ``category_lists`` maps a category name to the image ids it contains.
    Images in the ``cross`` category have no lanes by convention, so every
    surviving detection there is a false positive.
    """
    cfg = cfg or EvalConfig()
    category_lists = dict(category_lists or {})
    unknown = sorted(set(pred_source) - set(gt_source))
    if unknown:
        raise LaneMatchError(f"predictions reference unknown images: {', '.join(unknown)}")
    for name, ids in category_lists.items():
        missing = sorted(set(ids) - set(gt_source))
        if missing:
            raise LaneMatchError(f"category {name!r} lists unknown images: {', '.join(missing)}")

    membership = {}
    for name, ids in category_lists.items():
        for image_id in ids:
            membership.setdefault(image_id, []).append(name)

    report = EvalReport()
    for cat in [ALL, *category_lists]:
        for t in cfg.iou_thresholds:
            report.counts[(cat, t)] = Counts()

    scores = []
    for image_id in sorted(gt_source):
        cats = membership.get(image_id, [])
        kept = filter_confident(pred_source.get(image_id, []), cfg.conf_threshold)
        scores.extend(p.score for p in kept)
        gts = gt_source[image_id]
        ious = iou_matrix(kept, gts, cfg)
        for t in cfg.iou_thresholds:
            res = match_ious(ious, t)
            report.counts[(ALL, t)].add(res.tp, res.fp, res.fn)
            for cat in cats:
                if cat.lower() == CROSS:
                    report.counts[(cat, t)].add(0, len(kept), 0)
                else:
                    report.counts[(cat, t)].add(res.tp, res.fp, res.fn)
    report.hist_edges, report.hist_counts = confidence_histogram(scores)
    return report
