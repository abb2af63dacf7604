"""Training loop: splits, determinism, retention, divergence, initial loss."""
import io

import numpy as np
import pytest

from fpnseg.augment import AugmentConfig, Sample
from fpnseg.errors import ConfigError, TrainingDiverged
from fpnseg.model import build_model, tiny_config
from fpnseg.rng import RngStream
from fpnseg.synth import make_sample
from fpnseg.train import TrainConfig, _BestKeeper, split_holdout, train, validate
from fpnseg.checkpoint import model_from_checkpoint, save_checkpoint


def micro_model(seed=0):
    cfg = tiny_config(
        stage_widths=(8, 8, 16, 16),
        stem_channels=8,
        lateral_channels=8,
        pyramid_channels=4,
        head_channels=16,
        dropout_p=0.0,
    )
    return build_model(cfg, RngStream(seed))


def synth_samples(n, size=32, seed=0):
    out = []
    for i in range(n):
        image, labels = make_sample(size, RngStream(seed).derive("s", i))
        out.append(Sample(image=image.transpose(2, 0, 1).astype(np.float32) / 255.0,
                          labels=labels))
    return out


def quick_config(**over):
    base = dict(
        lr0=1e-3, decay=0.0, batch_size=2, iterations=4, validate_every=2,
        holdout_fraction=0.25, seed=0, dropout_p=0.0, crop_size=32, keep_best=2,
    )
    base.update(over)
    return TrainConfig(**base).validate()


# ---------------------------------------------------------------------------
# split


def test_split_803_samples():
    train_idx, val_idx = split_holdout(803, 0.25, seed=0)
    assert len(val_idx) == 201 and len(train_idx) == 602


def test_split_4_samples():
    train_idx, val_idx = split_holdout(4, 0.25, seed=0)
    assert len(val_idx) == 1 and len(train_idx) == 3


def test_split_is_a_partition():
    train_idx, val_idx = split_holdout(20, 0.3, seed=1)
    assert sorted(list(train_idx) + list(val_idx)) == list(range(20))


def test_split_deterministic_and_seed_sensitive():
    a = split_holdout(50, 0.2, seed=0)
    b = split_holdout(50, 0.2, seed=0)
    c = split_holdout(50, 0.2, seed=1)
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_split_rejects_degenerate():
    with pytest.raises(ConfigError):
        split_holdout(1, 0.25, seed=0)
    with pytest.raises(ConfigError):
        split_holdout(3, 0.01, seed=0)  # would hold out 0


# ---------------------------------------------------------------------------
# config


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(holdout_fraction=0.0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(iterations=0).validate()


# ---------------------------------------------------------------------------
# loop behavior


def test_loop_runs_and_logs():
    model = micro_model()
    samples = synth_samples(4)
    buf = io.StringIO()
    log = train(model, samples, quick_config(),
                aug_config=AugmentConfig.neutral(32), log_file=buf)
    assert [it for it, _ in log.losses] == [0, 1, 2, 3]
    assert [it for it, _, _ in log.validations] == [1, 3]
    lines = buf.getvalue().strip().split("\n")
    plain = [l for l in lines if "\tval\t" not in l]
    vals = [l for l in lines if "\tval\t" in l]
    assert len(plain) == 4 and len(vals) == 2
    # val lines: iteration, "val", mean, then one column per class
    assert len(vals[0].split("\t")) == 3 + 7


def test_loop_is_deterministic():
    samples = synth_samples(4)
    cfg = quick_config()
    aug = AugmentConfig.neutral(32)
    log1 = train(micro_model(), samples, cfg, aug_config=aug)
    log2 = train(micro_model(), samples, cfg, aug_config=aug)
    assert log1.losses == log2.losses
    assert log1.validations == log2.validations


def test_loop_seed_changes_trajectory():
    samples = synth_samples(4)
    aug = AugmentConfig.neutral(32)
    log1 = train(micro_model(), samples, quick_config(seed=0), aug_config=aug)
    log2 = train(micro_model(), samples, quick_config(seed=1), aug_config=aug)
    assert log1.losses != log2.losses


def test_parameters_change_and_loss_is_finite():
    model = micro_model()
    before = {n: p.value.copy() for n, p in model.params.items()}
    log = train(model, synth_samples(4), quick_config(),
                aug_config=AugmentConfig.neutral(32))
    assert all(np.isfinite(v) for _, v in log.losses)
    moved = sum(not np.array_equal(before[n], p.value) for n, p in model.params.items())
    assert moved == len(model.params)
    assert model.step == 4


def test_resume_reproduces_unbroken_run(tmp_path):
    samples = synth_samples(4)
    aug = AugmentConfig.neutral(32)
    cfg = quick_config(iterations=6, validate_every=3)

    full = micro_model()
    log_full = train(full, samples, cfg, aug_config=aug)

    part = micro_model()
    train(part, samples, quick_config(iterations=3, validate_every=3), aug_config=aug)
    save_checkpoint(tmp_path / "mid.ckpt", part)
    resumed = model_from_checkpoint(tmp_path / "mid.ckpt")
    log_tail = train(resumed, samples, cfg, aug_config=aug, start_iteration=3)

    assert log_tail.losses == log_full.losses[3:]
    for name in full.params:
        np.testing.assert_array_equal(
            full.params[name].value, resumed.params[name].value, err_msg=name
        )


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    model = micro_model()
    model.params["classifier.weight"].value[...] = np.inf
    with pytest.raises(TrainingDiverged):
        train(model, synth_samples(4), quick_config(),
              aug_config=AugmentConfig.neutral(32))


def test_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        train(micro_model(), [], quick_config())


def test_initial_loss_matches_uniform_prediction():
    # fresh model, near-zero classifier -> first loss ~ ln 7 + 0.5 * 6/7
    model = micro_model()
    log = train(model, synth_samples(6), quick_config(iterations=1, lr0=0.0),
                aug_config=AugmentConfig.neutral(32))
    want = np.log(7) + 0.5 * (1 - 1 / 7)
    assert abs(log.losses[0][1] - want) < 0.3


# ---------------------------------------------------------------------------
# checkpoint retention


def test_best_keeper_retains_top_k(tmp_path):
    keeper = _BestKeeper(2, str(tmp_path))
    model = micro_model()
    for it, metric in ((10, 0.5), (20, 0.8), (30, 0.6), (40, 0.9)):
        keeper.offer(it, metric, model)
    kept = sorted(p.name for p in tmp_path.iterdir())
    assert kept == ["best_20.ckpt", "best_40.ckpt"]
    assert [it for _, it, _ in keeper.entries] == [40, 20]


def test_best_keeper_tie_prefers_earlier(tmp_path):
    keeper = _BestKeeper(1, str(tmp_path))
    model = micro_model()
    keeper.offer(10, 0.7, model)
    keeper.offer(20, 0.7, model)
    assert [p.name for p in tmp_path.iterdir()] == ["best_10.ckpt"]


def test_train_writes_best_checkpoints(tmp_path):
    log = train(micro_model(), synth_samples(4), quick_config(keep_best=1),
                aug_config=AugmentConfig.neutral(32), out_dir=str(tmp_path))
    assert len(log.checkpoints) == 1
    it, metric, path = log.checkpoints[0]
    assert (tmp_path / f"best_{it}.ckpt").exists()
    restored = model_from_checkpoint(path)
    assert restored.step > 0


# ---------------------------------------------------------------------------
# validation helper


def test_validate_reports_global_iou():
    model = micro_model()
    samples = synth_samples(3)
    rep = validate(model, samples, crop_size=32)
    assert 0.0 <= rep.mean <= 1.0
