"""Positive/negative label assignment for lane predictions.

Two assigners share one output type:

* the classical assigner selects, per GT, ``k`` lowest-cost predictions where
  ``k`` comes from the summed LineIoUs of the best candidates;
* the MatchNet assigner keeps every pair whose predicted match probability
  clears a threshold.

``make_targets`` and ``balance_sample`` turn the classical assigner plus the
detector pair loss into training data for MatchNet.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator, clone

from ._validation import LaneMatchError, ModelIncompatibleError
from .cost import CostWeights, classical_cost_matrix, pair_loss_matrix
from .matchnet import N_FEATURES, MatchNetClassifier, MlpModel, feature_matrix, forward

CLASSICAL = "classical"
MATCHNET = "matchnet"


@dataclass(frozen=True)
class AssignerConfig:
    k_max: int = 4
    matchnet_threshold: float = 0.7
    matchnet_k_cap: int = None
    t_L: float = 0.3
    pairs_per_image: int = 18

    def __post_init__(self):
        if self.k_max < 1:
            raise LaneMatchError("k_max must be a positive integer")
        if not 0.0 < self.matchnet_threshold < 1.0:
            raise LaneMatchError("matchnet_threshold must lie in (0, 1)")
        if self.matchnet_k_cap is not None and self.matchnet_k_cap < 1:
            raise LaneMatchError("matchnet_k_cap must be a positive integer")
        if self.pairs_per_image < 2:
            raise LaneMatchError("pairs_per_image must be >= 2")


@dataclass
class Assignment:
    """Positives per GT as ``(pred_index, score)`` lists; everything else is negative.

    ``score`` is the classical cost or the MatchNet probability depending
    on ``method``.
    """

    positives: list
    method: str
    n_preds: int
    k: list = None
    no_predictions: bool = False

    def pairs(self):
        return {(p, j) for j, items in enumerate(self.positives) for p, _ in items}

    def pred_to_gt(self):
        return {p: j for j, items in enumerate(self.positives) for p, _ in items}

    def counts(self):
        return [len(items) for items in self.positives]

    @property
    def n_positives(self):
        return sum(self.counts())


def dynamic_k(ious, k_max=4):
    """Number of positives for one GT: floor of its top-``k_max`` IoU sum, clipped to [1, k_max]."""
    ious = np.sort(np.asarray(ious, dtype=np.float64).ravel())[::-1][:k_max]
    return int(min(max(math.floor(ious.sum()), 1), k_max))


def _solve_capacitated(cost, caps):
    """Min-cost assignment of predictions to GT slots.

    GT ``j`` takes at most ``caps[j]`` predictions and each prediction at
    most one GT. Among assignments with the most pairs, GT coverage is
    maximised first, then total cost minimised.
    """
    n_preds, _ = cost.shape
    cols, owners = [], []
    span = float(cost.max() - cost.min()) if cost.size else 0.0
    bonus = span * (n_preds + 1) + 1.0
    for j, cap in enumerate(caps):
        for slot in range(min(cap, n_preds)):
            cols.append(cost[:, j] - (bonus if slot == 0 else 0.0))
            owners.append(j)
    if not cols:
        return []
    rows, picked = linear_sum_assignment(np.column_stack(cols))
    return [(int(r), owners[c]) for r, c in zip(rows, picked)]


def assign_classical(preds, gts, weights=None, cfg=None, half_width=None):
    weights = weights or CostWeights()
    cfg = cfg or AssignerConfig()
    positives = [[] for _ in gts]
    if not gts:
        return Assignment(positives, CLASSICAL, len(preds), k=[])
    if not preds:
        return Assignment(positives, CLASSICAL, 0, k=[0] * len(gts), no_predictions=True)
    cost, liou = classical_cost_matrix(preds, gts, weights, half_width)
    ks = [dynamic_k(liou[:, j], cfg.k_max) for j in range(len(gts))]
    for p, j in _solve_capacitated(cost, ks):
        positives[j].append((p, float(cost[p, j])))
    for items in positives:
        items.sort()
    return Assignment(positives, CLASSICAL, len(preds), k=ks)


def _match_probabilities(model, feats):
    P, G, _ = feats.shape
    flat = feats.reshape(-1, N_FEATURES)
    if isinstance(model, MlpModel):
        if model.n_inputs != N_FEATURES:
            raise ModelIncompatibleError(
                f"model expects {model.n_inputs} inputs, features have {N_FEATURES}"
            )
        probs = forward(model, flat) if len(flat) else np.zeros(0)
    else:
        if getattr(model, "n_features_in_", N_FEATURES) != N_FEATURES:
            raise ModelIncompatibleError("classifier was fitted on a different feature set")
        probs = model.predict_proba(flat)[:, 1] if len(flat) else np.zeros(0)
    return np.asarray(probs).reshape(P, G)


def assign_from_scores(scores, cfg=None):
    """Threshold a ``(P, G)`` probability matrix into an assignment."""
    cfg = cfg or AssignerConfig()
    scores = np.asarray(scores, dtype=np.float64)
    P, G = scores.shape
    positives = [[] for _ in range(G)]
    if P and G:
        above = scores > cfg.matchnet_threshold
        masked = np.where(above, scores, -np.inf)
        best = masked.argmax(axis=1)
        for p in np.flatnonzero(above.any(axis=1)):
            j = int(best[p])
            positives[j].append((int(p), float(scores[p, j])))
    for j, items in enumerate(positives):
        items.sort(key=lambda item: (-item[1], item[0]))
        if cfg.matchnet_k_cap is not None:
            del items[cfg.matchnet_k_cap:]
        items.sort()
    return Assignment(positives, MATCHNET, P, no_predictions=(P == 0 and G > 0))


def assign_matchnet(preds, gts, model, cfg=None, half_width=None):
    feats = feature_matrix(preds, gts, half_width)
    return assign_from_scores(_match_probabilities(model, feats), cfg)


@dataclass
class LabeledPair:
    features: np.ndarray
    label: int
    gt_index: int
    pred_index: int
    cost: float
    classical_positive: bool
    pair_loss: float


def make_targets(preds, gts, weights=None, cfg=None, half_width=None, lambda_cls=1.0):
    """Label every pair: +1 iff classical-positive and pair loss below ``t_L``."""
    weights = weights or CostWeights()
    cfg = cfg or AssignerConfig()
    if not preds or not gts:
        return []
    assignment = assign_classical(preds, gts, weights, cfg, half_width)
    chosen = assignment.pairs()
    cost, _ = classical_cost_matrix(preds, gts, weights, half_width)
    loss = pair_loss_matrix(preds, gts, lambda_cls, weights, half_width)
    feats = feature_matrix(preds, gts, half_width)
    pairs = []
    for p in range(len(preds)):
        for j in range(len(gts)):
            positive = (p, j) in chosen
            label = 1 if positive and loss[p, j] < cfg.t_L else -1
            pairs.append(
                LabeledPair(feats[p, j], label, j, p, float(cost[p, j]), positive, float(loss[p, j]))
            )
    return pairs


@dataclass
class BalancedSample:
    pairs: list
    short: bool = False

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def balance_sample(pairs, cfg=None, rng_seed=0):
    """Keep the positives and top up with random negatives to ``pairs_per_image``."""
    cfg = cfg or AssignerConfig()
    if not pairs:
        raise LaneMatchError("balance_sample needs at least one pair")
    n = cfg.pairs_per_image
    if len(pairs) < n:
        return BalancedSample(list(pairs), short=True)
    rng = np.random.default_rng(rng_seed)
    pos = [p for p in pairs if p.label > 0]
    neg = [p for p in pairs if p.label <= 0]
    if len(pos) > n:
        keep = np.sort(rng.choice(len(pos), size=n, replace=False))
        pos = [pos[i] for i in keep]
    fill = np.sort(rng.choice(len(neg), size=n - len(pos), replace=False))
    return BalancedSample(pos + [neg[i] for i in fill])


class ClassicalAssigner(BaseEstimator):
    """Cost-based dynamic-k assigner with scikit-learn style parameters."""

    def __init__(self, k_max=4, lambda0=-3.0, lambda1=1.0, focal_alpha=0.25,
                 focal_gamma=2.0, half_width=None):
        self.k_max = k_max
        self.lambda0 = lambda0
        self.lambda1 = lambda1
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.half_width = half_width

    def cost_weights(self):
        return CostWeights(lambda0=self.lambda0, lambda1=self.lambda1,
                           focal_alpha=self.focal_alpha, focal_gamma=self.focal_gamma)

    def fit(self, scenes=None, y=None):
        return self

    def assign(self, preds, gts):
        return assign_classical(preds, gts, self.cost_weights(),
                                AssignerConfig(k_max=self.k_max), self.half_width)


class MatchNetAssigner(BaseEstimator):
    """Learned assigner; ``fit`` runs the teacher-student flow.

    ``fit`` takes an iterable of ``(preds, gts)`` scenes, labels every pair
    with the classical teacher plus pair-loss filter, balances each scene to
    ``pairs_per_image`` pairs and trains ``classifier`` on the result.
    """

    def __init__(self, classifier=None, teacher=None, threshold=0.7, k_cap=None,
                 t_l=0.3, pairs_per_image=18, lambda_cls=1.0, half_width=None,
                 random_state=0):
        self.classifier = classifier
        self.teacher = teacher
        self.threshold = threshold
        self.k_cap = k_cap
        self.t_l = t_l
        self.pairs_per_image = pairs_per_image
        self.lambda_cls = lambda_cls
        self.half_width = half_width
        self.random_state = random_state

    def _config(self):
        k_max = self.teacher.k_max if self.teacher is not None else 4
        return AssignerConfig(k_max=k_max, matchnet_threshold=self.threshold,
                              matchnet_k_cap=self.k_cap, t_L=self.t_l,
                              pairs_per_image=self.pairs_per_image)

    def build_training_set(self, scenes):
        """Balanced per-scene samples of labelled pairs."""
        teacher = self.teacher if self.teacher is not None else ClassicalAssigner()
        cfg = self._config()
        samples = []
        for i, (preds, gts) in enumerate(scenes):
            pairs = make_targets(preds, gts, teacher.cost_weights(), cfg,
                                 self.half_width, self.lambda_cls)
            if pairs:
                samples.append(balance_sample(pairs, cfg, rng_seed=self.random_state + i))
        return samples

    def fit(self, scenes, y=None):
        samples = self.build_training_set(scenes)
        if not samples:
            raise LaneMatchError("no scene produced any (prediction, GT) pair")
        X = np.concatenate([[p.features for p in s] for s in samples])
        labels = np.concatenate([[p.label for p in s] for s in samples])
        groups = np.concatenate([[i] * len(s) for i, s in enumerate(samples)])
        clf = self.classifier if self.classifier is not None else MatchNetClassifier(
            random_state=self.random_state)
        self.classifier_ = clone(clf).fit(X, labels, groups=groups)
        self.n_samples_ = len(samples)
        return self

    def assign(self, preds, gts):
        model = getattr(self, "classifier_", None)
        if model is None:
            if self.classifier is None or not hasattr(self.classifier, "model_"):
                raise LaneMatchError("MatchNetAssigner is not fitted")
            model = self.classifier
        return assign_matchnet(preds, gts, model, self._config(), self.half_width)
