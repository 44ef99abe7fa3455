"""Linear classifier heads trained with softmax cross-entropy.

The trainer is mini-batch SGD with momentum plus a monotone schedule: an
epoch whose full-data loss would rise is rolled back and the step size
halved, so the recorded loss trace never increases. Also holds the two
one-shot aggregation baselines: prediction ensembling (max probability
across heads) and parameter averaging.
"""

from dataclasses import dataclass

import numpy as np

from .features import FeatureDataset


@dataclass(frozen=True, eq=False)
class ClassifierHead:
    """Affine map to class logits: weights (C, d) and bias (C,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        b = np.array(self.bias, dtype=np.float64, copy=True)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError("weights must be (C, d) with a length-C bias")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("head parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    step_size: float = 1e-3
    weight_decay: float = 0.0
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    return p / p.sum(axis=1, keepdims=True)


def cross_entropy_and_grad(weights, bias, x, labels, weight_decay: float = 0.0):
    """Mean softmax cross-entropy and its analytic gradient.

    Returns (loss, grad_weights, grad_bias); the loss includes the
    0.5 * weight_decay * ||W||^2 penalty when weight_decay > 0.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    logits = x @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float((lse - shifted[np.arange(n), labels]).mean())
    p = np.exp(shifted - lse[:, None])
    p[np.arange(n), labels] -= 1.0
    grad_w = p.T @ x / n
    grad_b = p.sum(axis=0) / n
    if weight_decay > 0:
        loss += 0.5 * weight_decay * float((weights * weights).sum())
        grad_w = grad_w + weight_decay * weights
    return loss, grad_w, grad_b


def train_head(x, labels, num_classes: int, config: TrainConfig | None = None):
    """Fit a head by seeded mini-batch SGD; returns (head, loss trace).

    The trace starts with the loss of the zero-initialized head and gains
    one entry per epoch. An epoch that would increase the full-data loss
    is reverted (parameters and momentum) and the step size halved, which
    keeps the trace non-increasing.
    """
    if config is None:
        config = TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a non-empty (n, d) matrix")
    if labels.shape != (x.shape[0],):
        raise ValueError("labels must match the number of rows")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels must lie in [0, num_classes)")
    n, d = x.shape
    rng = np.random.default_rng(config.seed)
    w = np.zeros((num_classes, d))
    b = np.zeros(num_classes)
    vel_w = np.zeros_like(w)
    vel_b = np.zeros_like(b)
    best_loss, _, _ = cross_entropy_and_grad(w, b, x, labels, config.weight_decay)
    best_w, best_b = w.copy(), b.copy()
    trace = [best_loss]
    step = config.step_size
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, gw, gb = cross_entropy_and_grad(w, b, x[batch], labels[batch], config.weight_decay)
            vel_w = config.momentum * vel_w - step * gw
            vel_b = config.momentum * vel_b - step * gb
            w = w + vel_w
            b = b + vel_b
        loss, _, _ = cross_entropy_and_grad(w, b, x, labels, config.weight_decay)
        if loss <= best_loss:
            best_loss = loss
            best_w, best_b = w.copy(), b.copy()
        else:
            w, b = best_w.copy(), best_b.copy()
            vel_w = np.zeros_like(w)
            vel_b = np.zeros_like(b)
            step *= 0.5
        trace.append(best_loss)
    return ClassifierHead(best_w, best_b), trace


def predict_proba(head: ClassifierHead, x) -> np.ndarray:
    """Row-wise softmax probabilities, shape (n, C)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.dim:
        raise ValueError(f"need an (n, {head.dim}) matrix")
    return _softmax(x @ head.weights.T + head.bias)


def predict(head: ClassifierHead, x) -> np.ndarray:
    """Most probable class per row; ties go to the smallest class index."""
    return np.argmax(predict_proba(head, x), axis=1)


def zero_one_loss(head: ClassifierHead, ds: FeatureDataset) -> float:
    """Fraction of misclassified rows."""
    if ds.num_samples == 0:
        raise ValueError("zero-one loss is undefined on an empty dataset")
    return float((predict(head, ds.features) != ds.labels).mean())


def ensemble_predict(heads, x) -> np.ndarray:
    """Class of the single highest probability over all (head, class) pairs.

    Ties resolve toward the smaller class index, then the smaller head
    index.
    """
    heads = list(heads)
    if not heads:
        raise ValueError("need at least one head")
    shape = (heads[0].num_classes, heads[0].dim)
    if any((h.num_classes, h.dim) != shape for h in heads):
        raise ValueError("all heads must share (C, d)")
    # (n, C, H) flattened row-major: argmax scans class-major, head-minor
    probs = np.stack([predict_proba(h, x) for h in heads], axis=2)
    n, c, h = probs.shape
    flat_idx = probs.reshape(n, c * h).argmax(axis=1)
    return flat_idx // h


def average_heads(heads, weights=None) -> ClassifierHead:
    """Convex combination of head parameters with normalized weights."""
    heads = list(heads)
    if not heads:
        raise ValueError("need at least one head")
    shape = (heads[0].num_classes, heads[0].dim)
    if any((h.num_classes, h.dim) != shape for h in heads):
        raise ValueError("all heads must share (C, d)")
    if weights is None:
        weights = np.ones(len(heads))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(heads),):
        raise ValueError("need one weight per head")
    if weights.min() < 0:
        raise ValueError("head weights must be non-negative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("head weights must not all be zero")
    weights = weights / total
    w = sum(wt * h.weights for wt, h in zip(weights, heads))
    b = sum(wt * h.bias for wt, h in zip(weights, heads))
    return ClassifierHead(w, b)
