"""Feature pyramid network with a bottleneck-residual encoder.

Encoder stages C2..C5 halve resolution stage by stage; the top-down pathway
projects each stage to a common width, adds upsampled deeper features, and
refines every level with a pair of 3x3 convolutions. The head concatenates
all pyramid levels at 1/4 resolution, mixes them with a 3x3 conv + BN + ReLU,
applies spatial dropout, classifies with a 1x1 conv, and upsamples the
logits bilinearly to the input size.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ConfigError, ShapeError
from .optim import Parameter
from .rng import RngStream


@dataclass
class ModelConfig:
    stage_widths: tuple = (256, 512, 1024, 2048)
    stage_blocks: tuple = (3, 4, 6, 3)
    stem_channels: int = 64
    lateral_channels: int = 256
    pyramid_channels: int = 128
    head_channels: int = 512
    num_classes: int = 7
    dropout_p: float = 0.5
    bias: bool = True  # biases on lateral/pyramid/classifier convs

    def validate(self):
        if len(self.stage_widths) != 4 or len(self.stage_blocks) != 4:
            raise ConfigError("model needs exactly 4 encoder stages")
        if any(w <= 0 for w in self.stage_widths) or any(b <= 0 for b in self.stage_blocks):
            raise ConfigError("stage widths and block counts must be positive")
        if min(self.stem_channels, self.lateral_channels, self.pyramid_channels,
               self.head_channels, self.num_classes) <= 0:
            raise ConfigError("all channel widths must be positive")
        if self.head_channels != 4 * self.pyramid_channels:
            raise ConfigError(
                f"head_channels ({self.head_channels}) must be 4x pyramid_channels "
                f"({self.pyramid_channels})"
            )
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("dropout_p must be in [0, 1)")
        return self


def resnet50_config(**overrides):
    return replace(ModelConfig(), **overrides).validate()


def tiny_config(**overrides):
    cfg = ModelConfig(
        stage_widths=(16, 32, 64, 128),
        stage_blocks=(1, 1, 1, 1),
        stem_channels=16,
        lateral_channels=64,
        pyramid_channels=64,
        head_channels=256,
    )
    return replace(cfg, **overrides).validate()


PRESETS = {"resnet50": resnet50_config, "tiny": tiny_config}


class Model:
    """Parameter set + batch-norm running stats for one FPN instance."""

    def __init__(self, config, params, buffers):
        self.config = config
        self.params = params    # name -> Parameter
        self.buffers = buffers  # name -> ndarray (BN running stats)

    # -- parameter access -------------------------------------------------

    def leaf(self, name):
        return Var(self.params[name].value, name=name)

    def _conv(self, prefix, x, stride=1, padding=0, bias=False):
        b = self.leaf(prefix + ".bias") if bias else None
        return ad.conv2d(x, self.leaf(prefix + ".weight"), b, stride=stride, padding=padding)

    def _bn(self, prefix, x, mode):
        return ad.batch_norm2d(
            x,
            self.leaf(prefix + ".gamma"),
            self.leaf(prefix + ".beta"),
            self.buffers[prefix + ".running_mean"],
            self.buffers[prefix + ".running_var"],
            mode,
        )

    # -- forward ----------------------------------------------------------

    def encoder_forward(self, x, mode="train", act=ad.relu):
        x = ad.as_var(x)
        n, c, h, w = x.data.shape
        if h % 32 or w % 32:
            raise ShapeError(f"encoder input dims must be divisible by 32, got {h}x{w}")
        y = act(self._bn("stem.bn", self._conv("stem.conv", x, stride=2, padding=3), mode))
        y = ad.max_pool2d(y, 3, 2, padding=1)
        feats = []
        for s in range(1, 5):
            for b in range(self.config.stage_blocks[s - 1]):
                stride = 2 if (s > 1 and b == 0) else 1
                y = self._bottleneck(f"layer{s}.{b}", y, stride, mode, act)
            feats.append(y)
        return tuple(feats)  # C2, C3, C4, C5

    def _bottleneck(self, prefix, x, stride, mode, act):
        y = act(self._bn(f"{prefix}.bn1", self._conv(f"{prefix}.conv1", x), mode))
        y = act(self._bn(f"{prefix}.bn2", self._conv(f"{prefix}.conv2", y, stride=stride, padding=1), mode))
        y = self._bn(f"{prefix}.bn3", self._conv(f"{prefix}.conv3", y), mode)
        if f"{prefix}.downsample.conv.weight" in self.params:
            shortcut = self._bn(
                f"{prefix}.downsample.bn",
                self._conv(f"{prefix}.downsample.conv", x, stride=stride),
                mode,
            )
        else:
            shortcut = x
        return act(ad.add(y, shortcut))

    def fpn_topdown(self, feats, act=ad.relu):
        c2, c3, c4, c5 = feats
        bias = self.config.bias
        m = {5: self._conv("lateral5", c5, bias=bias)}
        for i, ci in ((4, c4), (3, c3), (2, c2)):
            m[i] = ad.add(ad.upsample_nearest(m[i + 1], 2), self._conv(f"lateral{i}", ci, bias=bias))
        p = []
        for i in (2, 3, 4, 5):
            y = act(self._conv(f"pyramid{i}.conv1", m[i], padding=1, bias=bias))
            p.append(self._conv(f"pyramid{i}.conv2", y, padding=1, bias=bias))
        return tuple(p)  # P2, P3, P4, P5

    def head_forward(self, pyramids, mode="train", rng=None, dropout_p=None, act=ad.relu):
        p2, p3, p4, p5 = pyramids
        if dropout_p is None:
            dropout_p = self.config.dropout_p
        merged = ad.concat_channels(
            [p2] + [ad.upsample_nearest(p, f) for p, f in ((p3, 2), (p4, 4), (p5, 8))]
        )
        y = act(self._bn("head.bn", self._conv("head.conv", merged, padding=1), mode))
        if mode == "train" and dropout_p > 0:
            if rng is None:
                raise ValueError("head_forward: train-mode dropout needs an RngStream")
            y = ad.spatial_dropout(y, dropout_p, mode, rng.derive("dropout").generator)
        logits = self._conv("classifier", y, bias=self.config.bias)
        h4, w4 = logits.data.shape[2], logits.data.shape[3]
        return ad.upsample_bilinear(logits, h4 * 4, w4 * 4)

    def forward(self, x, mode="train", rng=None, dropout_p=None, act=ad.relu):
        feats = self.encoder_forward(x, mode, act)
        pyramids = self.fpn_topdown(feats, act)
        return self.head_forward(pyramids, mode, rng, dropout_p, act)

    # -- persistence helpers ----------------------------------------------

    def state_tensors(self):
        """All tensors, named, in deterministic order (params, Adam state, buffers)."""
        out = {}
        for name, p in self.params.items():
            out[name] = p.value
            out[name + ".adam_m"] = p.adam_m
            out[name + ".adam_v"] = p.adam_v
        for name, b in self.buffers.items():
            out[name] = b
        return out

    @property
    def step(self):
        steps = {p.step for p in self.params.values()}
        if len(steps) != 1:
            raise ValueError("inconsistent per-parameter step counts")
        return steps.pop()

    def set_step(self, step):
        for p in self.params.values():
            p.step = step


def _shape_plan(config):
    """Deterministically ordered name -> shape map for all parameters/buffers."""
    plan, buffers = {}, {}

    def conv(prefix, cout, cin, k, bias=False):
        plan[prefix + ".weight"] = (cout, cin, k, k)
        if bias:
            plan[prefix + ".bias"] = (cout,)

    def bn(prefix, c):
        plan[prefix + ".gamma"] = (c,)
        plan[prefix + ".beta"] = (c,)
        buffers[prefix + ".running_mean"] = (c,)
        buffers[prefix + ".running_var"] = (c,)

    conv("stem.conv", config.stem_channels, 3, 7)
    bn("stem.bn", config.stem_channels)
    cin = config.stem_channels
    for s in range(1, 5):
        width = config.stage_widths[s - 1]
        mid = max(width // 4, 1)
        for b in range(config.stage_blocks[s - 1]):
            prefix = f"layer{s}.{b}"
            stride = 2 if (s > 1 and b == 0) else 1
            conv(f"{prefix}.conv1", mid, cin, 1)
            bn(f"{prefix}.bn1", mid)
            conv(f"{prefix}.conv2", mid, mid, 3)
            bn(f"{prefix}.bn2", mid)
            conv(f"{prefix}.conv3", width, mid, 1)
            bn(f"{prefix}.bn3", width)
            if stride != 1 or cin != width:
                conv(f"{prefix}.downsample.conv", width, cin, 1)
                bn(f"{prefix}.downsample.bn", width)
            cin = width
    for i, width in zip((2, 3, 4, 5), config.stage_widths):
        conv(f"lateral{i}", config.lateral_channels, width, 1, bias=config.bias)
    for i in (2, 3, 4, 5):
        conv(f"pyramid{i}.conv1", config.pyramid_channels, config.lateral_channels, 3, bias=config.bias)
        conv(f"pyramid{i}.conv2", config.pyramid_channels, config.pyramid_channels, 3, bias=config.bias)
    conv("head.conv", config.head_channels, 4 * config.pyramid_channels, 3)
    bn("head.bn", config.head_channels)
    conv("classifier", config.num_classes, config.head_channels, 1, bias=config.bias)
    return plan, buffers


def build_model(config, rng=None):
    """Build and He-initialize a model; bit-reproducible for a given (config, seed)."""
    config.validate()
    if rng is None:
        rng = RngStream(0)
    gen = rng.derive("init").generator
    plan, buffer_plan = _shape_plan(config)
    params = {}
    for name, shape in plan.items():
        if name == "classifier.weight":
            # small-std init keeps initial logits near uniform
            value = gen.normal(0.0, 0.01, shape).astype(np.float32)
        elif name.endswith(".weight") and len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            value = gen.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(np.float32)
        elif name.endswith(".gamma"):
            value = np.ones(shape, dtype=np.float32)
        else:  # biases and betas
            value = np.zeros(shape, dtype=np.float32)
        params[name] = Parameter(name, value)
    buffers = {}
    for name, shape in buffer_plan.items():
        init = np.ones if name.endswith(".running_var") else np.zeros
        buffers[name] = init(shape, dtype=np.float32)
    return Model(config, params, buffers)


def parameter_count(model, prefix=""):
    return sum(p.value.size for n, p in model.params.items() if n.startswith(prefix))


def encoder_parameter_count(model):
    enc = ("stem.", "layer1.", "layer2.", "layer3.", "layer4.")
    return sum(p.value.size for n, p in model.params.items() if n.startswith(enc))
