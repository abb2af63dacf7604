"""Checkpoint format: bit-exact round trips, validation, corruption handling."""
import numpy as np
import pytest

from fpnseg.checkpoint import (
    load_checkpoint,
    model_from_checkpoint,
    restore_model,
    save_checkpoint,
)
from fpnseg.errors import CheckpointError
from fpnseg.model import build_model, tiny_config
from fpnseg.rng import RngStream


def micro_model(seed=0, **over):
    cfg = tiny_config(
        stage_widths=(8, 8, 16, 16),
        stem_channels=8,
        lateral_channels=8,
        pyramid_channels=4,
        head_channels=16,
        **over,
    )
    return build_model(cfg, RngStream(seed))


def perturb(model, seed=1):
    """Give Adam state and buffers non-trivial values so round trips are honest."""
    g = np.random.default_rng(seed)
    for p in model.params.values():
        p.adam_m = g.normal(size=p.value.shape).astype(np.float32)
        p.adam_v = g.uniform(0, 1, p.value.shape).astype(np.float32)
        p.step = 17
    for name, b in model.buffers.items():
        if name.endswith(".running_var"):
            b[...] = g.uniform(0.5, 1.5, b.shape).astype(np.float32)
        else:
            b[...] = g.normal(size=b.shape).astype(np.float32)
    return model


def test_roundtrip_bit_exact(tmp_path):
    m1 = perturb(micro_model())
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m1)
    m2 = model_from_checkpoint(path)
    assert m2.config == m1.config
    assert m2.step == 17
    t1, t2 = m1.state_tensors(), m2.state_tensors()
    assert set(t1) == set(t2)
    for name in t1:
        np.testing.assert_array_equal(t1[name], t2[name], err_msg=name)


def test_roundtrip_preserves_config_fields(tmp_path):
    m1 = micro_model(dropout_p=0.25, bias=True)
    save_checkpoint(tmp_path / "m.ckpt", m1)
    cfg, _, step = load_checkpoint(tmp_path / "m.ckpt")
    assert cfg.stage_widths == (8, 8, 16, 16)
    assert cfg.dropout_p == 0.25
    assert step == 0


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    m = micro_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_restore_rejects_shape_mismatch(tmp_path):
    m1 = micro_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m1)
    _, tensors, step = load_checkpoint(path)
    other = build_model(tiny_config(), RngStream(0))  # wider model
    with pytest.raises(CheckpointError):
        restore_model(other, tensors, step)


def test_restore_rejects_missing_tensor(tmp_path):
    m1 = micro_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m1)
    _, tensors, step = load_checkpoint(path)
    key = next(iter(tensors))
    del tensors[key]
    with pytest.raises(CheckpointError):
        restore_model(micro_model(seed=5), tensors, step)


def test_restored_model_predicts_identically(tmp_path):
    from fpnseg.infer import predict

    m1 = perturb(micro_model())
    save_checkpoint(tmp_path / "m.ckpt", m1)
    m2 = model_from_checkpoint(tmp_path / "m.ckpt")
    img = np.random.default_rng(2).uniform(0, 1, (3, 32, 32)).astype(np.float32)
    np.testing.assert_array_equal(predict(m1, img), predict(m2, img))


def test_save_is_deterministic(tmp_path):
    m = perturb(micro_model())
    save_checkpoint(tmp_path / "a.ckpt", m)
    save_checkpoint(tmp_path / "b.ckpt", m)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
