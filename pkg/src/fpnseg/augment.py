"""On-the-fly training augmentation.

Geometric transforms (random scale, rotation, crop) are applied jointly to
image and mask: the image is resampled bilinearly, labels by nearest
neighbor so class indices are never blended. Photometric jitter
(brightness, contrast, HSV) touches the image only.
"""
from dataclasses import dataclass, replace

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .codec import UNKNOWN, to_onehot
from .errors import ShapeError


@dataclass
class AugmentConfig:
    scale_range: tuple = (0.6, 1.4)
    max_rotation_deg: float = 30.0
    crop_size: int = 448
    brightness_range: tuple = (-0.2, 0.2)
    contrast_range: tuple = (0.8, 1.2)
    hue_range_deg: tuple = (-18.0, 18.0)
    saturation_range: tuple = (0.8, 1.2)
    value_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        if self.crop_size <= 0:
            raise ValueError("crop_size must be positive")
        for r in (self.scale_range, self.brightness_range, self.contrast_range,
                  self.hue_range_deg, self.saturation_range, self.value_range):
            if len(r) != 2 or r[1] < r[0]:
                raise ValueError(f"invalid range {r}")

    @classmethod
    def neutral(cls, crop_size):
        """Identity-transform config (deterministic center-anchored crops aside)."""
        return cls(
            scale_range=(1.0, 1.0),
            max_rotation_deg=0.0,
            crop_size=crop_size,
            brightness_range=(0.0, 0.0),
            contrast_range=(1.0, 1.0),
            hue_range_deg=(0.0, 0.0),
            saturation_range=(1.0, 1.0),
            value_range=(1.0, 1.0),
        )


@dataclass
class Sample:
    image: np.ndarray   # (3, H, W) float32 in [0, 1]
    labels: np.ndarray  # (H, W) uint8 in 0..6

    def __post_init__(self):
        if self.image.shape[1:] != self.labels.shape:
            raise ShapeError(
                f"sample: image {self.image.shape} and labels {self.labels.shape} disagree"
            )


def geometric_augment(sample, config, rng):
    """Random scale/rotate/crop of an image+mask pair.

    Out-of-frame pixels become 0 in the image and Unknown in the mask, so
    the result is always crop_size x crop_size.
    """
    gen = rng.generator
    s = gen.uniform(*config.scale_range)
    theta = np.deg2rad(gen.uniform(-config.max_rotation_deg, config.max_rotation_deg))
    h, w = sample.labels.shape
    cs = config.crop_size

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    canvas_h = int(np.ceil(s * (h * abs(cos_t) + w * abs(sin_t))))
    canvas_w = int(np.ceil(s * (w * abs(cos_t) + h * abs(sin_t))))
    top = gen.integers(0, max(canvas_h - cs, 0) + 1)
    left = gen.integers(0, max(canvas_w - cs, 0) + 1)

    # map crop pixel -> canvas -> source via the inverse similarity transform
    yy, xx = np.meshgrid(np.arange(cs, dtype=np.float64), np.arange(cs, dtype=np.float64), indexing="ij")
    qy = top + yy - (canvas_h - 1) / 2.0
    qx = left + xx - (canvas_w - 1) / 2.0
    sy = (cos_t * qy + sin_t * qx) / s + (h - 1) / 2.0
    sx = (-sin_t * qy + cos_t * qx) / s + (w - 1) / 2.0

    valid = (sy >= 0) & (sy <= h - 1) & (sx >= 0) & (sx <= w - 1)
    y0 = np.clip(np.floor(sy), 0, h - 1).astype(np.intp)
    x0 = np.clip(np.floor(sx), 0, w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (np.clip(sy, 0, h - 1) - y0).astype(np.float32)
    fx = (np.clip(sx, 0, w - 1) - x0).astype(np.float32)

    img = sample.image
    out_img = (
        img[:, y0, x0] * (1 - fy) * (1 - fx)
        + img[:, y1, x0] * fy * (1 - fx)
        + img[:, y0, x1] * (1 - fy) * fx
        + img[:, y1, x1] * fy * fx
    )
    out_img *= valid
    out_img = np.clip(out_img, 0.0, 1.0, out=out_img).astype(np.float32)

    ry = np.clip(np.rint(sy), 0, h - 1).astype(np.intp)
    rx = np.clip(np.rint(sx), 0, w - 1).astype(np.intp)
    out_labels = np.where(valid, sample.labels[ry, rx], np.uint8(UNKNOWN)).astype(np.uint8)
    return Sample(image=out_img, labels=out_labels)


def photometric_augment(image, config, rng):
    """Brightness/contrast jitter then HSV jitter, all clamped to [0, 1]."""
    gen = rng.generator
    b = gen.uniform(*config.brightness_range)
    c = gen.uniform(*config.contrast_range)
    dh = gen.uniform(*config.hue_range_deg) / 360.0
    fs = gen.uniform(*config.saturation_range)
    fv = gen.uniform(*config.value_range)

    out = image.astype(np.float64)
    mean = out.mean()
    out = (out - mean) * c + mean + b
    out = np.clip(out, 0.0, 1.0)

    hsv = rgb_to_hsv(out.transpose(1, 2, 0))
    hsv[..., 0] = (hsv[..., 0] + dh) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * fs, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * fv, 0.0, 1.0)
    out = hsv_to_rgb(hsv).transpose(2, 0, 1)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def augment_sample(sample, config, rng):
    geo = geometric_augment(sample, config, rng.derive("geometric"))
    img = photometric_augment(geo.image, config, rng.derive("photometric"))
    return Sample(image=img, labels=geo.labels)


def make_batch(samples, indices, config, rng):
    """Assemble an augmented training batch with per-sample derived RNG streams.

    Returns (images (B,3,S,S) float32, one-hot targets (B,7,S,S) float32).
    """
    images, targets = [], []
    for pos, idx in enumerate(indices):
        if not 0 <= idx < len(samples):
            raise IndexError(f"make_batch: sample index {idx} out of range")
        aug = augment_sample(samples[idx], config, rng.derive("sample", pos))
        images.append(aug.image)
        targets.append(to_onehot(aug.labels))
    return np.stack(images), np.stack(targets)
