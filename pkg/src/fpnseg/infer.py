"""Whole-image inference: divisibility padding, optional 4-rotation
test-time augmentation, probability maps and label extraction."""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError


@dataclass
class PaddedImage:
    data: np.ndarray        # (3, Hp, Wp), Hp/Wp divisible by the multiple
    original_size: tuple    # (H, W)
    pads: tuple             # (top, bottom, left, right)


def pad_to_multiple(image, multiple=32):
    """Reflect-pad so both sides are the next multiple; split padding evenly,
    extra pixel to bottom/right."""
    c, h, w = image.shape
    th = -(-h // multiple) * multiple
    tw = -(-w // multiple) * multiple
    top = (th - h) // 2
    bottom = th - h - top
    left = (tw - w) // 2
    right = tw - w - left
    if top or bottom or left or right:
        data = np.pad(image, ((0, 0), (top, bottom), (left, right)), mode="reflect")
    else:
        data = image
    return PaddedImage(data=data, original_size=(h, w), pads=(top, bottom, left, right))


def crop_pads(t, padded):
    h, w = padded.original_size
    top, _, left, _ = padded.pads
    return t[..., top : top + h, left : left + w]


def _softmax(logits):
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def predict(model, image):
    """Eval-mode forward on one (3, H, W) image -> per-pixel class
    probabilities (num_classes, H, W) at the original resolution."""
    padded = pad_to_multiple(image)
    logits = model.forward(padded.data[None].astype(np.float32), mode="eval").data[0]
    return crop_pads(_softmax(logits), padded)


def rotate90(t, k):
    """Exact counter-clockwise rotation by k*90 degrees of the last two axes."""
    if k not in (0, 1, 2, 3):
        raise ValueError(f"rotate90: k must be in 0..3, got {k}")
    return np.ascontiguousarray(np.rot90(t, k, axes=(-2, -1)))


def tta_predict(model, image):
    """Average predictions over the four 90-degree rotations of the input."""
    c, h, w = image.shape
    acc = None
    for k in range(4):
        p = predict(model, rotate90(image, k))
        p = rotate90(p, (4 - k) % 4)
        acc = p if acc is None else acc + p
    return acc / 4.0
