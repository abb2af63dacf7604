"""Iteration-based training loop: with-replacement batch sampling, Adam with
learning-rate decay, periodic validation, best-checkpoint retention."""
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, make_batch
from .autodiff import param_grads
from .checkpoint import save_checkpoint
from .codec import argmax_labels, to_onehot
from .errors import ConfigError, TrainingDiverged
from .infer import predict
from .losses import IoUAccumulator, LossWeights, combined_loss, soft_jaccard
from .optim import adam_step
from .rng import RngStream


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    decay: float = 1e-4
    batch_size: int = 8
    iterations: int = 20000
    validate_every: int = 500
    keep_best: int = 3
    holdout_fraction: float = 0.25
    seed: int = 0
    dropout_p: float = 0.5
    alpha: float = 1.0
    beta: float = 0.5
    class_weights: tuple = (1.0,) * 7
    crop_size: int = 448

    def validate(self):
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.validate_every < 1:
            raise ConfigError("validate_every must be >= 1")
        return self

    def loss_weights(self):
        return LossWeights(alpha=self.alpha, beta=self.beta, class_weights=self.class_weights)


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)        # (iteration, loss)
    validations: list = field(default_factory=list)   # (iteration, mean IoU, per-class)
    checkpoints: list = field(default_factory=list)   # (iteration, mean IoU, path)


def split_holdout(dataset_size, fraction, seed):
    """Deterministic shuffled split; validation count is round-half-up."""
    if dataset_size < 2:
        raise ConfigError("need at least 2 samples to split")
    n_val = int(math.floor(fraction * dataset_size + 0.5))
    if n_val < 1 or n_val >= dataset_size:
        raise ConfigError(f"degenerate split: {n_val} of {dataset_size} held out")
    perm = RngStream(seed).derive("holdout").generator.permutation(dataset_size)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _center_crop(sample, size):
    c, h, w = sample.image.shape
    if h % 32 == 0 and w % 32 == 0:
        return sample.image, sample.labels
    top = max((h - size) // 2, 0)
    left = max((w - size) // 2, 0)
    return (
        sample.image[:, top : top + size, left : left + size],
        sample.labels[top : top + size, left : left + size],
    )


def validate(model, val_samples, crop_size=448):
    """Mean and per-class IoU over deterministic crops, aggregated globally."""
    acc = IoUAccumulator()
    for sample in val_samples:
        image, labels = _center_crop(sample, crop_size)
        probs = predict(model, image)
        acc.add(argmax_labels(probs), labels)
    return acc.report()


def _format_val_line(iteration, report):
    ious = "\t".join("nan" if v is None else f"{v:.6f}" for v in report.per_class)
    return f"{iteration}\tval\t{report.mean:.6f}\t{ious}"


class _BestKeeper:
    """Retains the keep_best checkpoints by metric (ties favor earlier iterations)."""

    def __init__(self, keep, out_dir):
        self.keep = keep
        self.out_dir = out_dir
        self.entries = []  # (metric, iteration, path)

    def offer(self, iteration, metric, model):
        path = None
        if self.out_dir is not None:
            path = os.path.join(self.out_dir, f"best_{iteration}.ckpt")
            save_checkpoint(path, model)
        self.entries.append((metric, iteration, path))
        # best first: higher metric, then earlier iteration
        self.entries.sort(key=lambda e: (-e[0], e[1]))
        while len(self.entries) > self.keep:
            _, _, dropped = self.entries.pop()
            if dropped is not None and os.path.exists(dropped):
                os.remove(dropped)


def train(model, samples, config, aug_config=None, out_dir=None, log_file=None,
          start_iteration=0, log_every=1):
    """Run the training loop; returns a TrainLog.

    RNG streams are derived from (seed, iteration), so restarting at
    ``start_iteration`` from a checkpoint continues the exact trajectory of
    an unbroken run.
    """
    config.validate()
    if not samples:
        raise ConfigError("dataset is empty")
    if aug_config is None:
        aug_config = AugmentConfig(crop_size=config.crop_size)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    root = RngStream(config.seed)
    train_idx, val_idx = split_holdout(len(samples), config.holdout_fraction, config.seed)
    train_samples = [samples[i] for i in train_idx]
    val_samples = [samples[i] for i in val_idx]

    weights = config.loss_weights()
    log = TrainLog()
    keeper = _BestKeeper(config.keep_best, out_dir)

    def emit(line):
        if log_file is not None:
            log_file.write(line + "\n")
            log_file.flush()

    for it in range(start_iteration, config.iterations):
        idx = root.derive("batch-indices", it).integers(0, len(train_samples), config.batch_size)
        images, targets = make_batch(train_samples, idx, aug_config, root.derive("augment", it))
        logits = model.forward(
            images, mode="train", rng=root.derive("model", it), dropout_p=config.dropout_p
        )
        loss = combined_loss(logits, targets, weights)
        loss_value = float(loss.data)
        if not np.isfinite(loss_value):
            raise TrainingDiverged(it, loss_value)
        grads = param_grads(loss, model.params)
        adam_step(model.params, grads, config.lr0, config.decay)
        log.losses.append((it, loss_value))
        if (it + 1) % log_every == 0 or it == config.iterations - 1:
            emit(f"{it}\t{loss_value:.6f}")
        if (it + 1) % config.validate_every == 0 or it == config.iterations - 1:
            report = validate(model, val_samples, config.crop_size)
            log.validations.append((it, report.mean, report.per_class))
            emit(_format_val_line(it, report))
            keeper.offer(it, report.mean, model)

    log.checkpoints = [(it, m, path) for m, it, path in keeper.entries]
    return log


def training_soft_jaccard(model, samples, weights=None):
    """Eval-mode soft-Jaccard and argmax mean IoU over a list of samples."""
    weights = weights or LossWeights()
    acc = IoUAccumulator()
    j_total, n = 0.0, 0
    for sample in samples:
        probs = predict(model, sample.image)
        onehot = to_onehot(sample.labels)
        j = soft_jaccard(probs[None], onehot[None], weights)
        j_total += float(j.data)
        n += 1
        acc.add(argmax_labels(probs), sample.labels)
    return j_total / n, acc.report()
