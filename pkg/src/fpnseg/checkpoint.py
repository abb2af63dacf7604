"""Binary checkpoint format.

Layout (all integers and floats little-endian):

    magic            8 bytes  b"FPNSEG01"
    format version   u16      (currently 1)
    config count     u32
    per entry        u16 key length, key UTF-8, u16 value length, value UTF-8
    step count       u64      (optimizer steps taken)
    tensor count     u32
    per tensor       u16 name length, name UTF-8, u8 rank, u32 per dim,
                     raw float32 payload

Tensors cover parameters, Adam first/second moments (`<name>.adam_m` /
`<name>.adam_v`) and batch-norm running statistics, so a resumed run is
bit-identical to an unbroken one.
"""
import struct
from dataclasses import fields

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, build_model

MAGIC = b"FPNSEG01"
VERSION = 1


def _config_items(config):
    out = {}
    for f in fields(ModelConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            out[f.name] = ",".join(str(x) for x in v)
        else:
            out[f.name] = str(v)
    return out


def _parse_config(items):
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name not in items:
            raise CheckpointError(f"checkpoint config missing key {f.name!r}")
        raw = items[f.name]
        if f.name in ("stage_widths", "stage_blocks"):
            kwargs[f.name] = tuple(int(x) for x in raw.split(","))
        elif f.name == "dropout_p":
            kwargs[f.name] = float(raw)
        elif f.name == "bias":
            kwargs[f.name] = raw == "True"
        else:
            kwargs[f.name] = int(raw)
    return ModelConfig(**kwargs).validate()


def _write_str(fh, s):
    b = s.encode("utf-8")
    fh.write(struct.pack("<H", len(b)))
    fh.write(b)


def _read(fh, fmt):
    size = struct.calcsize(fmt)
    buf = fh.read(size)
    if len(buf) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, buf)


def _read_str(fh):
    (n,) = _read(fh, "<H")
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint")
    return buf.decode("utf-8")


def save_checkpoint(path, model):
    tensors = model.state_tensors()
    config = _config_items(model.config)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(config)))
        for k, v in config.items():
            _write_str(fh, k)
            _write_str(fh, v)
        fh.write(struct.pack("<Q", model.step))
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            _write_str(fh, name)
            fh.write(struct.pack("<B", t.ndim))
            for d in t.shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path):
    """-> (ModelConfig, tensor dict, step count)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
        (version,) = _read(fh, "<H")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (n_cfg,) = _read(fh, "<I")
        items = {}
        for _ in range(n_cfg):
            k = _read_str(fh)
            items[k] = _read_str(fh)
        (step,) = _read(fh, "<Q")
        (n_tensors,) = _read(fh, "<I")
        tensors = {}
        for _ in range(n_tensors):
            name = _read_str(fh)
            (rank,) = _read(fh, "<B")
            shape = tuple(_read(fh, "<I")[0] for _ in range(rank))
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise CheckpointError("truncated checkpoint")
            tensors[name] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return _parse_config(items), tensors, step


def restore_model(model, tensors, step):
    """Load tensors into an existing model, validating every shape."""
    for name, p in model.params.items():
        for key, target in ((name, "value"), (name + ".adam_m", "adam_m"), (name + ".adam_v", "adam_v")):
            if key not in tensors:
                raise CheckpointError(f"checkpoint missing tensor {key!r}")
            t = tensors[key]
            if t.shape != p.value.shape:
                raise CheckpointError(
                    f"tensor {key!r} has shape {t.shape}, model expects {p.value.shape}"
                )
            setattr(p, target, t.astype(np.float32))
    for name, b in model.buffers.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint missing tensor {name!r}")
        if tensors[name].shape != b.shape:
            raise CheckpointError(f"tensor {name!r} has shape {tensors[name].shape}, model expects {b.shape}")
        b[...] = tensors[name]
    model.set_step(step)
    return model


def model_from_checkpoint(path):
    config, tensors, step = load_checkpoint(path)
    return restore_model(build_model(config), tensors, step)
