"""Matplotlib figures rendered next to the delimited outputs."""
import matplotlib

matplotlib.use("Agg")

import os

import matplotlib.pyplot as plt
import numpy as np

from .codec import CLASS_NAMES


def render_training_figures(log, out_dir):
    """Loss curve and validation-IoU curve PNGs from a TrainLog."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    if log.losses:
        its, losses = zip(*log.losses)
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(its, losses, lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.set_title("training loss")
        ax.grid(alpha=0.3)
        path = os.path.join(out_dir, "loss_curve.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)

    if log.validations:
        its = [v[0] for v in log.validations]
        means = [v[1] for v in log.validations]
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(its, means, marker="o", ms=3)
        ax.set_xlabel("iteration")
        ax.set_ylabel("mean IoU")
        ax.set_ylim(0, 1)
        ax.set_title("validation mean IoU")
        ax.grid(alpha=0.3)
        path = os.path.join(out_dir, "val_iou.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)

    return paths


def render_iou_figure(report, path):
    """Per-class IoU bar chart; undefined classes shown hatched at zero."""
    values = [0.0 if v is None else v for v in report.per_class]
    hatches = ["//" if v is None else "" for v in report.per_class]
    fig, ax = plt.subplots(figsize=(7, 4))
    bars = ax.bar(range(len(values)), values, color="tab:blue")
    for bar, hatch in zip(bars, hatches):
        bar.set_hatch(hatch)
    ax.axhline(report.mean, color="tab:red", ls="--", lw=1, label=f"mean = {report.mean:.3f}")
    ax.set_xticks(range(len(CLASS_NAMES)))
    ax.set_xticklabels(CLASS_NAMES, rotation=30, ha="right")
    ax.set_ylabel("IoU")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
