"""Flat key=value run configuration files.

One `key = value` per line, `#` comments. Keys map onto TrainConfig,
AugmentConfig and ModelConfig fields (plus `preset`); unknown keys are an
error so typos never pass silently. CLI flags override file values.
"""
from dataclasses import dataclass, fields, replace

from .augment import AugmentConfig
from .errors import ConfigError
from .model import PRESETS, ModelConfig
from .train import TrainConfig


def _parse_value(raw, template):
    try:
        if isinstance(template, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(template, tuple):
            parts = [p for p in raw.split(",") if p.strip()]
            elem = template[0] if template else 1.0
            return tuple(type(elem)(p.strip()) for p in parts)
        return type(template)(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse value {raw!r}") from None


@dataclass
class RunConfig:
    train: TrainConfig
    model: ModelConfig
    augment: AugmentConfig

    @classmethod
    def defaults(cls, preset="resnet50"):
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (choose from {sorted(PRESETS)})")
        train = TrainConfig()
        return cls(
            train=train,
            model=PRESETS[preset](),
            augment=AugmentConfig(crop_size=train.crop_size),
        )


def read_key_values(path):
    items = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key in items:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            items[key] = raw
    return items


def load_run_config(path=None, overrides=None):
    """Build a RunConfig from defaults, an optional file, and CLI overrides."""
    items = read_key_values(path) if path else {}
    items.update(overrides or {})
    preset = items.pop("preset", "resnet50")
    cfg = RunConfig.defaults(str(preset))

    sections = [
        ("train", cfg.train, TrainConfig),
        ("model", cfg.model, ModelConfig),
        ("augment", cfg.augment, AugmentConfig),
    ]
    known = {}
    for attr, obj, cls in sections:
        for f in fields(cls):
            known.setdefault(f.name, (attr, f.name))

    updates = {"train": {}, "model": {}, "augment": {}}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        attr, field_name = known[key]
        template = getattr(getattr(cfg, attr), field_name)
        value = _parse_value(raw, template) if isinstance(raw, str) else raw
        updates[attr][field_name] = value

    cfg = RunConfig(
        train=replace(cfg.train, **updates["train"]).validate(),
        model=replace(cfg.model, **updates["model"]),
        augment=replace(cfg.augment, **updates["augment"]),
    )
    # keep crop size and dropout consistent across sections unless set explicitly
    if "crop_size" in updates["train"] and "crop_size" not in updates["augment"]:
        cfg.augment = replace(cfg.augment, crop_size=cfg.train.crop_size)
    if "dropout_p" in updates["train"] and "dropout_p" not in updates["model"]:
        cfg.model = replace(cfg.model, dropout_p=cfg.train.dropout_p)
    cfg.model.validate()
    return cfg
