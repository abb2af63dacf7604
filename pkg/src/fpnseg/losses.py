"""Training losses (soft Jaccard, categorical cross entropy, their weighted
combination) and the hard-label IoU used for evaluation."""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var, as_var
from .codec import NUM_CLASSES
from .errors import ShapeError


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.5
    class_weights: tuple = (1.0,) * NUM_CLASSES
    smooth_eps: float = 1e-7
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        if any(w < 0 for w in self.class_weights):
            raise ValueError("class weights must be non-negative")
        if self.smooth_eps <= 0 or self.clamp_eps <= 0:
            raise ValueError("epsilons must be positive")


@dataclass
class IoUReport:
    per_class: list  # float in [0,1], or None when the class is absent from both
    mean: float

    def defined(self):
        return [v for v in self.per_class if v is not None]


def _check_pair(probs, target):
    if probs.shape != target.shape:
        raise ShapeError(f"loss: probs shape {probs.shape} != target shape {target.shape}")
    if probs.ndim != 4 or probs.shape[1] != NUM_CLASSES:
        raise ShapeError(f"loss: expected (N, {NUM_CLASSES}, H, W), got {probs.shape}")


def soft_jaccard(probs, target, weights=None):
    """Differentiable Jaccard score: mean over pixels of the per-class ratio
    y*p / (y + p - y*p + eps), class-weighted. Perfect prediction gives ~1."""
    weights = weights or LossWeights()
    probs = as_var(probs)
    target = np.asarray(target)
    _check_pair(probs.data, target)
    n = target.shape[0] * target.shape[2] * target.shape[3]
    dtype = probs.data.dtype
    y = target.astype(dtype)
    if ad.DEBUG and not np.all((target == 0) | (target == 1)):
        raise ValueError("soft_jaccard: target must be binary")
    w = np.asarray(weights.class_weights, dtype=dtype).reshape(1, NUM_CLASSES, 1, 1)
    inter = probs * y
    denom = (y - inter) + probs + np.asarray(weights.smooth_eps, dtype=dtype)
    return ad.vsum(inter / denom * w) * (1.0 / n)


def cross_entropy(probs, target, clamp_eps=1e-7):
    """Categorical cross entropy, mean over pixels, probs clamped to [eps, 1]."""
    probs = as_var(probs)
    target = np.asarray(target)
    _check_pair(probs.data, target)
    n = target.shape[0] * target.shape[2] * target.shape[3]
    y = target.astype(probs.data.dtype)
    logp = ad.log(ad.clip(probs, clamp_eps, 1.0))
    return -ad.vsum(logp * y) * (1.0 / n)


def combined_loss(logits, target, weights=None):
    """alpha * cross-entropy + beta * (1 - soft Jaccard), on softmaxed logits."""
    weights = weights or LossWeights()
    probs = ad.softmax_channels(as_var(logits))
    h = cross_entropy(probs, target, weights.clamp_eps)
    j = soft_jaccard(probs, target, weights)
    return weights.alpha * h + weights.beta * (1.0 - j)


class IoUAccumulator:
    """Global per-class intersection/union counts across many label maps."""

    def __init__(self, num_classes=NUM_CLASSES):
        self.inter = np.zeros(num_classes, dtype=np.int64)
        self.union = np.zeros(num_classes, dtype=np.int64)

    def add(self, pred, truth):
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape:
            raise ShapeError(f"iou: pred shape {pred.shape} != truth shape {truth.shape}")
        for c in range(len(self.inter)):
            p = pred == c
            t = truth == c
            self.inter[c] += np.count_nonzero(p & t)
            self.union[c] += np.count_nonzero(p | t)

    def report(self):
        per_class = [
            float(i) / float(u) if u > 0 else None
            for i, u in zip(self.inter, self.union)
        ]
        defined = [v for v in per_class if v is not None]
        mean = float(np.mean(defined)) if defined else float("nan")
        return IoUReport(per_class=per_class, mean=mean)


def eval_iou(pred, truth):
    """Per-class and mean IoU of two label maps; absent classes are excluded."""
    acc = IoUAccumulator()
    acc.add(pred, truth)
    return acc.report()
