"""Dataset directory conventions: paired `<id>_sat.png` / `<id>_mask.png` files."""
import os

import numpy as np
from PIL import Image

from .augment import Sample
from .codec import decode_mask, encode_mask
from .errors import DataError


def read_image(path):
    """PNG -> float32 (3, H, W) in [0, 1]; alpha is dropped."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from None
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def read_mask(path):
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"))
    except OSError as e:
        raise DataError(f"cannot read mask {path}: {e}") from None
    return decode_mask(rgb)


def write_image(path, rgb_u8):
    Image.fromarray(np.asarray(rgb_u8, dtype=np.uint8)).save(path)


def write_mask(path, labels):
    write_image(path, encode_mask(labels))


def list_pairs(data_dir):
    """Sorted (id, sat path, mask path) triples; missing counterparts are errors."""
    try:
        names = sorted(os.listdir(data_dir))
    except OSError as e:
        raise DataError(f"cannot list {data_dir}: {e}") from None
    sats = {n[: -len("_sat.png")]: n for n in names if n.endswith("_sat.png")}
    masks = {n[: -len("_mask.png")]: n for n in names if n.endswith("_mask.png")}
    if not sats:
        raise DataError(f"no samples found in {data_dir}")
    pairs = []
    for sid in sorted(sats):
        if sid not in masks:
            raise DataError(f"missing mask for {os.path.join(data_dir, sats[sid])}")
        pairs.append((sid, os.path.join(data_dir, sats[sid]), os.path.join(data_dir, masks[sid])))
    return pairs


def load_dataset(data_dir):
    """Load every image/mask pair in a directory as a list of Samples."""
    return [
        Sample(image=read_image(sat), labels=read_mask(mask))
        for _, sat, mask in list_pairs(data_dir)
    ]
