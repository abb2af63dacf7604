"""Synthetic image/mask generator for tests and desk-scale experiments.

Each sample is a background plus a few random rectangles and ellipses, one
class per region. Image pixels are the class palette color plus bounded
noise, so the mask is recoverable from the image by thresholding alone and
the segmentation task is learnable by construction.
"""
import os

import numpy as np

from .codec import NUM_CLASSES, PALETTE
from .data import write_image, write_mask
from .rng import RngStream

NOISE_AMPLITUDE = 45  # < 128 threshold margin: noisy colors still decode correctly


def make_sample(size, rng):
    """One (image uint8 HxWx3, labels uint8 HxW) pair."""
    gen = rng.generator
    labels = np.full((size, size), gen.integers(0, NUM_CLASSES), dtype=np.uint8)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(int(gen.integers(3, 7))):
        cls = np.uint8(gen.integers(0, NUM_CLASSES))
        cy, cx = gen.integers(0, size, 2)
        ry = int(gen.integers(size // 8, size // 2))
        rx = int(gen.integers(size // 8, size // 2))
        if gen.uniform() < 0.5:
            region = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            region = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        labels[region] = cls
    base = PALETTE[labels].astype(np.int16)
    noise = gen.integers(-NOISE_AMPLITUDE, NOISE_AMPLITUDE + 1, base.shape, dtype=np.int16)
    image = np.clip(base + noise, 0, 255).astype(np.uint8)
    return image, labels


def generate_dataset(out_dir, n, size, seed=0):
    """Write n `<id>_sat.png`/`<id>_mask.png` pairs; byte-identical per seed."""
    if size % 32:
        raise ValueError("synthetic image size must be divisible by 32")
    os.makedirs(out_dir, exist_ok=True)
    root = RngStream(seed)
    for i in range(n):
        image, labels = make_sample(size, root.derive("synth-sample", i))
        write_image(os.path.join(out_dir, f"{i:03d}_sat.png"), image)
        write_mask(os.path.join(out_dir, f"{i:03d}_mask.png"), labels)
