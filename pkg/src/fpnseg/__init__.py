"""Feature-pyramid-network land segmentation: numpy autodiff engine, FPN
model, combined cross-entropy + soft-Jaccard loss, mask codec, augmentation,
training loop, and padded/TTA inference."""

from .augment import AugmentConfig, Sample, make_batch
from .autodiff import Var, backward, param_grads
from .codec import (
    CLASS_NAMES,
    CLASS_TABLE,
    NUM_CLASSES,
    argmax_labels,
    decode_mask,
    encode_mask,
    to_onehot,
)
from .infer import pad_to_multiple, predict, rotate90, tta_predict
from .losses import IoUReport, LossWeights, combined_loss, cross_entropy, eval_iou, soft_jaccard
from .model import Model, ModelConfig, build_model, resnet50_config, tiny_config
from .optim import Parameter, adam_step
from .rng import RngStream
from .train import TrainConfig, TrainLog, split_holdout, train, validate

__version__ = "0.1.0"
