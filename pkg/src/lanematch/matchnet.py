"""MatchNet: a small fully connected pair classifier trained from scratch.

The network maps the 6 normalized pair features to a match probability.
Hidden layers use leaky ReLU; the output layer uses a sigmoid. Training
minimises mean binary cross-entropy with AdamW and a cosine schedule.

The functional core (``forward``, ``gradients``, ``opt_step``, ``train``)
operates on :class:`MlpModel`; :class:`MatchNetClassifier` wraps it in the
scikit-learn estimator API.
"""
from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    LaneMatchError,
    ModelIncompatibleError,
    check_features,
    check_same_grid,
)
from .lane import line_iou_matrix

FEATURE_NAMES = ("f_dis", "f_theta", "f_dx", "f_dy", "f_score", "f_liou")
N_FEATURES = len(FEATURE_NAMES)
DEFAULT_DIMS = (N_FEATURES, 64, 128, 64, 1)


def feature_matrix(preds, gts, half_width=None):
    """Pair features for every (prediction, GT) pair, shape ``(P, G, 6)``."""
    if not preds or not gts:
        return np.zeros((len(preds), len(gts), N_FEATURES))
    grid = check_same_grid(*preds, *gts)
    px = np.stack([p.xs for p in preds])[:, None]
    gx = np.stack([g.xs for g in gts])[None]
    common = np.stack([p.valid for p in preds])[:, None] & np.stack([g.valid for g in gts])[None]
    n_common = common.sum(axis=-1)
    total = np.where(common, np.abs(px - gx), 0.0).sum(axis=-1)
    f_dis = np.where(n_common > 0, total / np.maximum(n_common, 1) / grid.img_w, 1.0)

    def attr(lanes, name):
        return np.array([getattr(lane, name) for lane in lanes])

    f_theta = np.abs(attr(preds, "theta")[:, None] - attr(gts, "theta")[None]) / math.pi
    f_dx = np.abs(attr(preds, "start_x")[:, None] - attr(gts, "start_x")[None]) / grid.img_w
    f_dy = np.abs(attr(preds, "start_y")[:, None] - attr(gts, "start_y")[None]) / grid.img_h
    f_score = np.broadcast_to(attr(preds, "score")[:, None], f_dis.shape)
    f_liou = line_iou_matrix(preds, gts, half_width)
    feats = np.stack([f_dis, f_theta, f_dx, f_dy, f_score, f_liou], axis=-1)
    return np.clip(feats, 0.0, 1.0)


def build_features(pred, gt, half_width=None):
    return feature_matrix([pred], [gt], half_width)[0, 0]


class PairFeaturizer(TransformerMixin, BaseEstimator):
    """Turns ``(prediction, gt)`` lane pairs into MatchNet feature rows."""

    def __init__(self, half_width=None):
        self.half_width = half_width

    def fit(self, pairs, y=None):
        self.n_features_out_ = N_FEATURES
        return self

    def transform(self, pairs):
        rows = [build_features(p, g, self.half_width) for p, g in pairs]
        return np.array(rows).reshape(-1, N_FEATURES)

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list
    biases: list
    leaky_slope: float = 0.01

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or dims[-1] != 1:
            raise LaneMatchError("layer_dims must have at least two entries and end in 1")
        if min(dims) < 1:
            raise LaneMatchError("every layer needs at least one unit")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise LaneMatchError("one weight matrix and bias vector is needed per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if np.shape(w) != (dims[i], dims[i + 1]) or np.shape(b) != (dims[i + 1],):
                raise LaneMatchError(f"layer {i} parameters do not match layer_dims")
        self.layer_dims = dims

    @classmethod
    def init(cls, layer_dims=DEFAULT_DIMS, seed=0, leaky_slope=0.01):
        """Glorot-uniform weights, zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(layer_dims), weights, biases, leaky_slope)

    @property
    def n_inputs(self):
        return self.layer_dims[0]

    def params(self):
        return [*self.weights, *self.biases]

    def copy(self):
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def _check_model(model, X):
    X = check_features(X, model.n_inputs)
    if not all(np.all(np.isfinite(p)) for p in model.params()):
        raise ModelIncompatibleError("model has non-finite parameters")
    return X


def _forward(model, X):
    """Logits plus the (pre-activation, activation) trail for backprop."""
    acts = [X]
    pres = []
    h = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pres.append(z)
        if i < last:
            h = np.where(z > 0, z, model.leaky_slope * z)
            acts.append(h)
    return pres[-1][:, 0], pres, acts


def logits(model, X):
    X = _check_model(model, X)
    return _forward(model, X)[0]


def forward(model, X):
    """Match probability for each feature row (or a single feature vector)."""
    single = np.ndim(X) == 1
    p = expit(logits(model, X))
    return float(p[0]) if single else p


def bce_loss(p, y, eps=1e-7):
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(loss) if loss.ndim == 0 else loss


def mean_loss(model, X, y):
    """Mean BCE computed from logits (no clamping), the training objective."""
    z = logits(model, X)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def gradients(model, X, y):
    """Exact gradient of the mean BCE w.r.t. ``(weights, biases)``."""
    X = _check_model(model, X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise LaneMatchError("gradients need a nonempty batch with one label per row")
    z, pres, acts = _forward(model, X)
    delta = ((expit(z) - y) / X.shape[0])[:, None]
    n_layers = len(model.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * np.where(pres[i - 1] > 0, 1.0, model.leaky_slope)
    return grad_w, grad_b


@dataclass
class TrainConfig:
    epochs: int = 3
    lr0: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise LaneMatchError("epochs must be >= 1")
        if not self.lr0 > 0:
            raise LaneMatchError("lr0 must be positive")
        if self.batch_size < 1:
            raise LaneMatchError("batch_size must be >= 1")


@dataclass
class AdamWState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, model):
        return cls([np.zeros_like(p) for p in model.params()],
                   [np.zeros_like(p) for p in model.params()])


def opt_step(model, grads, state, lr, cfg=None):
    """One AdamW update; returns a new model and state, inputs untouched."""
    cfg = cfg or TrainConfig()
    grad_w, grad_b = grads
    flat_grads = [*grad_w, *grad_b]
    if len(flat_grads) != len(state.m):
        raise LaneMatchError("optimizer state does not match the model")
    t = state.t + 1
    b1, b2 = cfg.beta1, cfg.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(model.params(), flat_grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p = p * (1.0 - lr * cfg.weight_decay) - lr * m_hat / (np.sqrt(v_hat) + cfg.eps_opt)
        new_params.append(p)
        new_m.append(m)
        new_v.append(v)
    n = len(model.weights)
    new_model = replace(model, weights=new_params[:n], biases=new_params[n:])
    return new_model, AdamWState(new_m, new_v, t)


def cosine_lr(step, total_steps, lr0):
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise LaneMatchError("cosine_lr needs 0 <= step <= total_steps and total_steps >= 1")
    return max(0.0, lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps)))


@dataclass
class TrainLog:
    epoch_loss: list = field(default_factory=list)
    epoch_accuracy: list = field(default_factory=list)
    steps: int = 0
    single_class: bool = False


def _sample_arrays(sample):
    """Accept either ``(X, y)`` or a sequence of labelled pairs."""
    if isinstance(sample, tuple) and len(sample) == 2 and not hasattr(sample[0], "features"):
        X, y = sample
        return np.asarray(X, dtype=np.float64).reshape(-1, N_FEATURES), np.asarray(y, dtype=np.float64)
    X = np.array([pair.features for pair in sample]).reshape(-1, N_FEATURES)
    y = np.array([1.0 if pair.label > 0 else 0.0 for pair in sample])
    return X, y


def train(dataset, cfg=None, layer_dims=DEFAULT_DIMS, leaky_slope=0.01, model=None):
    """Train MatchNet on a list of samples; each sample is one image's pair set.

    Labels may be {0, 1} or {-1, +1}. Batches hold ``cfg.batch_size``
    samples and the loss is the mean over all their pairs.
    """
    cfg = cfg or TrainConfig()
    samples = [_sample_arrays(s) for s in dataset]
    samples = [(X, (y > 0).astype(np.float64)) for X, y in samples if len(y)]
    if not samples:
        raise LaneMatchError("training needs a nonempty dataset")
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = MlpModel.init(layer_dims, rng, leaky_slope)
    else:
        model = model.copy()
    if model.n_inputs != N_FEATURES:
        raise ModelIncompatibleError(f"model expects {model.n_inputs} inputs, features have {N_FEATURES}")

    log = TrainLog()
    all_y = np.concatenate([y for _, y in samples])
    if all_y.min() == all_y.max():
        log.single_class = True
        warnings.warn("training set contains a single class", RuntimeWarning, stacklevel=2)

    n_batches = math.ceil(len(samples) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    state = AdamWState.zeros_like(model)
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(samples))
        loss_sum, correct, count = 0.0, 0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            X = np.concatenate([samples[i][0] for i in idx])
            y = np.concatenate([samples[i][1] for i in idx])
            z = logits(model, X)
            loss_sum += float(np.sum(np.logaddexp(0.0, z) - y * z))
            correct += int(np.sum((z > 0) == (y > 0.5)))
            count += len(y)
            grads = gradients(model, X, y)
            model, state = opt_step(model, grads, state, cosine_lr(step, total_steps, cfg.lr0), cfg)
            step += 1
        log.epoch_loss.append(loss_sum / count)
        log.epoch_accuracy.append(correct / count)
    log.steps = step
    return model, log


class MatchNetClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn wrapper around the MatchNet MLP.

    ``fit`` accepts optional ``groups`` (one id per row, e.g. the image the
    pair came from); a batch then holds ``batch_size`` whole groups.
    """

    def __init__(
        self,
        hidden_dims=(64, 128, 64),
        leaky_slope=0.01,
        epochs=3,
        lr=1e-3,
        weight_decay=1e-2,
        batch_size=32,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        random_state=0,
    ):
        self.hidden_dims = hidden_dims
        self.leaky_slope = leaky_slope
        self.epochs = epochs
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            lr0=self.lr,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            seed=self.random_state,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_opt=self.eps,
        )

    def fit(self, X, y, groups=None):
        X = check_features(X, N_FEATURES)
        y = np.asarray(y).reshape(-1)
        if len(y) != len(X):
            raise LaneMatchError("X and y have inconsistent lengths")
        self.classes_ = np.unique(y)
        if len(self.classes_) > 2:
            raise LaneMatchError("MatchNet is a binary classifier")
        positive = y == self.classes_[-1] if len(self.classes_) == 2 else y > 0
        target = positive.astype(np.float64)
        if groups is None:
            samples = [(X[i:i + 1], target[i:i + 1]) for i in range(len(X))]
        else:
            groups = np.asarray(groups)
            _, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
            samples = []
            for g in np.argsort(first):
                rows = inverse.ravel() == g
                samples.append((X[rows], target[rows]))
        dims = (N_FEATURES, *self.hidden_dims, 1)
        self.model_, self.log_ = train(samples, self._train_config(), dims, self.leaky_slope)
        self.n_features_in_ = N_FEATURES
        return self

    @classmethod
    def from_model(cls, model, classes=(-1, 1)):
        """Wrap an already trained :class:`MlpModel` (e.g. loaded from disk)."""
        est = cls(hidden_dims=tuple(model.layer_dims[1:-1]), leaky_slope=model.leaky_slope)
        est.model_ = model
        est.classes_ = np.asarray(classes)
        est.n_features_in_ = model.n_inputs
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return logits(self.model_, X)

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        positive = self.decision_function(X) > 0
        if len(self.classes_) == 1:
            return np.full(len(positive), self.classes_[0])
        return np.where(positive, self.classes_[-1], self.classes_[0])
