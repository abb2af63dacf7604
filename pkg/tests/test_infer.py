"""Inference helpers: padding arithmetic, rotation group, TTA averaging."""
import numpy as np
import pytest

from fpnseg.infer import crop_pads, pad_to_multiple, predict, rotate90, tta_predict
from fpnseg.model import build_model, tiny_config
from fpnseg.rng import RngStream


def rand_image(h, w, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (3, h, w)).astype(np.float32)


# ---------------------------------------------------------------------------
# padding


def test_pad_2448_to_2464():
    p = pad_to_multiple(rand_image(2448, 2448))
    assert p.data.shape == (3, 2464, 2464)
    assert p.pads == (8, 8, 8, 8)
    assert p.original_size == (2448, 2448)


def test_pad_450_to_480_uneven_split():
    p = pad_to_multiple(rand_image(450, 450))
    assert p.data.shape == (3, 480, 480)
    assert p.pads == (15, 15, 15, 15)


def test_pad_odd_extra_goes_bottom_right():
    p = pad_to_multiple(rand_image(63, 33))
    assert p.data.shape == (3, 64, 64)
    assert p.pads == (0, 1, 15, 16)


def test_pad_already_divisible_is_noop():
    img = rand_image(64, 96)
    p = pad_to_multiple(img)
    assert p.data is img
    assert p.pads == (0, 0, 0, 0)


def test_pad_is_reflection():
    img = rand_image(30, 30, 1)
    p = pad_to_multiple(img)  # pads (1, 1, 1, 1)
    np.testing.assert_array_equal(p.data[:, 0, 1:-1], img[:, 1, :])
    np.testing.assert_array_equal(p.data[:, 1:-1, 0], img[:, :, 1])


def test_crop_pads_inverts_padding():
    img = rand_image(45, 77, 2)
    p = pad_to_multiple(img)
    np.testing.assert_array_equal(crop_pads(p.data, p), img)


# ---------------------------------------------------------------------------
# rotation


def test_rotate90_bad_k():
    with pytest.raises(ValueError):
        rotate90(np.zeros((3, 4, 4)), 4)


def test_rotate90_single_step_oracle():
    t = np.arange(6).reshape(1, 2, 3)
    want = np.array([[[2, 5], [1, 4], [0, 3]]])  # CCW by 90
    np.testing.assert_array_equal(rotate90(t, 1), want)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_rotate90_inverse(k):
    t = np.random.default_rng(3).normal(size=(2, 5, 7))
    np.testing.assert_array_equal(rotate90(rotate90(t, k), (4 - k) % 4), t)


def test_rotate90_composition():
    t = np.random.default_rng(4).normal(size=(1, 6, 6))
    np.testing.assert_array_equal(rotate90(rotate90(t, 1), 1), rotate90(t, 2))
    np.testing.assert_array_equal(rotate90(t, 0), t)


# ---------------------------------------------------------------------------
# prediction


@pytest.fixture(scope="module")
def model():
    return build_model(tiny_config(), RngStream(0))


def test_predict_shape_and_normalization(model):
    img = rand_image(50, 70, 5)  # forces padding to 64x96
    probs = predict(model, img)
    assert probs.shape == (7, 50, 70)
    assert probs.min() >= 0
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-5)


def test_predict_no_padding_path(model):
    probs = predict(model, rand_image(64, 64, 6))
    assert probs.shape == (7, 64, 64)


def test_predict_deterministic(model):
    img = rand_image(64, 64, 7)
    np.testing.assert_array_equal(predict(model, img), predict(model, img))


def test_tta_matches_manual_four_branch_average(model):
    img = rand_image(64, 64, 8)
    want = np.zeros((7, 64, 64))
    for k in range(4):
        p = predict(model, rotate90(img, k))
        want += rotate90(p, (4 - k) % 4)
    want /= 4
    got = tta_predict(model, img)
    assert np.max(np.abs(got - want)) < 1e-6
    np.testing.assert_allclose(got.sum(axis=0), 1.0, atol=1e-5)


def test_tta_on_constant_input_is_rotation_symmetric(model):
    # with a rotation-invariant input every branch sees the same image, so
    # the averaged map must itself be invariant under 90-degree rotation
    img = np.full((3, 64, 64), 0.25, dtype=np.float32)
    probs = tta_predict(model, img)
    np.testing.assert_allclose(rotate90(probs, 1), probs, atol=1e-6)


def test_tta_non_square_input(model):
    img = rand_image(32, 64, 9)
    probs = tta_predict(model, img)
    assert probs.shape == (7, 32, 64)
