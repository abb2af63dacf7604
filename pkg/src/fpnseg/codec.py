"""RGB mask <-> label map <-> one-hot conversions for the 7 land-cover classes."""
import numpy as np

from .errors import ShapeError

# (index, name, (R, G, B))
CLASS_TABLE = (
    (0, "urban", (0, 255, 255)),
    (1, "agriculture", (255, 255, 0)),
    (2, "rangeland", (255, 0, 255)),
    (3, "forest", (0, 255, 0)),
    (4, "water", (0, 0, 255)),
    (5, "barren", (255, 255, 255)),
    (6, "unknown", (0, 0, 0)),
)

NUM_CLASSES = len(CLASS_TABLE)
CLASS_NAMES = tuple(name for _, name, _ in CLASS_TABLE)
PALETTE = np.array([rgb for _, _, rgb in CLASS_TABLE], dtype=np.uint8)

UNKNOWN = 6

# bit key = 4*r + 2*g + b after thresholding; (255,0,0) has no class -> unknown
_BITS_TO_LABEL = np.full(8, UNKNOWN, dtype=np.uint8)
for _idx, _, (_r, _g, _b) in CLASS_TABLE:
    _BITS_TO_LABEL[4 * (_r // 255) + 2 * (_g // 255) + (_b // 255)] = _idx


def decode_mask(rgb):
    """Binarize each channel at >= 128 and look the triple up in the class table."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise ShapeError(f"decode_mask: expected HxWx3 raster, got {rgb.shape}")
    bits = (rgb[:, :, :3] >= 128).astype(np.uint8)
    key = bits[:, :, 0] * 4 + bits[:, :, 1] * 2 + bits[:, :, 2]
    return _BITS_TO_LABEL[key]


def encode_mask(labels):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= NUM_CLASSES:
        raise ValueError("encode_mask: labels out of range 0..6")
    return PALETTE[labels]


def to_onehot(labels, dtype=np.float32):
    """LabelMap (H, W) -> one-hot tensor (7, H, W)."""
    labels = np.asarray(labels)
    h, w = labels.shape
    out = np.zeros((NUM_CLASSES, h, w), dtype=dtype)
    out[labels, np.arange(h)[:, None], np.arange(w)[None, :]] = 1
    return out


def argmax_labels(probs):
    """Per-pixel argmax over channels; ties resolve to the lowest class index."""
    probs = np.asarray(probs)
    return probs.argmax(axis=0).astype(np.uint8)
