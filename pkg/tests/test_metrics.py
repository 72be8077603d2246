import math

import numpy as np
import pytest

from src.errors import DimensionMismatchError, ImageTooSmallError, NoFootprintError, ValidationError
from src.metrics import (
    bce_loss,
    chinline_deviation,
    dice_loss,
    footprint_chinline_deviation,
    mask_lower_boundary,
    reconstruction_loss,
    seg_loss,
    ssim,
    to_gray,
)
from src.shape_core import Shape


def test_ssim_of_identical_images_is_one(rng) -> None:
    image = rng.integers(0, 256, size=(32, 40)).astype(np.float64)
    assert ssim(image, image) == pytest.approx(1.0, abs=1e-9)


def test_ssim_is_symmetric(rng) -> None:
    a = rng.integers(0, 256, size=(24, 24)).astype(np.float64)
    b = rng.integers(0, 256, size=(24, 24)).astype(np.float64)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, b) < 1.0


def test_ssim_of_flat_images_is_luminance_term() -> None:
    a = np.full((16, 16), 100.0)
    b = np.full((16, 16), 150.0)
    c1 = (0.01 * 255) ** 2
    expected = (2 * 100 * 150 + c1) / (100 ** 2 + 150 ** 2 + c1)
    assert ssim(a, b) == pytest.approx(expected, rel=1e-9)


def test_ssim_accepts_rgba(rng) -> None:
    image = rng.integers(0, 256, size=(16, 16, 4), dtype=np.uint8)
    assert ssim(image, image) == pytest.approx(1.0, abs=1e-9)


def test_ssim_rejects_small_images() -> None:
    with pytest.raises(ImageTooSmallError):
        ssim(np.zeros((7, 20)), np.zeros((7, 20)))


def test_ssim_rejects_dimension_mismatch() -> None:
    with pytest.raises(DimensionMismatchError):
        ssim(np.zeros((10, 10)), np.zeros((10, 11)))


def test_reconstruction_loss_of_identical_images(rng) -> None:
    image = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    assert reconstruction_loss(image, image) == pytest.approx(-1.0, abs=1e-9)


def test_reconstruction_loss_grows_with_difference(rng) -> None:
    image = rng.integers(0, 200, size=(20, 20)).astype(np.float64)
    assert reconstruction_loss(image, image + 10) > reconstruction_loss(image, image + 1)


def test_to_gray_uses_rec601_weights() -> None:
    image = np.zeros((1, 1, 3))
    image[0, 0] = (100, 200, 50)
    assert to_gray(image)[0, 0] == pytest.approx(0.299 * 100 + 0.587 * 200 + 0.114 * 50)


def test_dice_loss_of_disjoint_maps() -> None:
    pred = np.zeros((8, 8))
    gt = np.zeros((8, 8))
    pred[:, :4] = 1
    gt[:, 4:] = 1
    assert dice_loss(pred, gt) == pytest.approx(1.0, abs=1e-6)


def test_dice_loss_of_identical_maps() -> None:
    mask = np.zeros((8, 8))
    mask[2:6, 2:6] = 1
    assert dice_loss(mask, mask) == pytest.approx(0.0, abs=1e-9)


def test_bce_at_one_half_is_ln2(rng) -> None:
    gt = rng.uniform(size=(10, 10))
    assert bce_loss(np.full((10, 10), 0.5), gt) == pytest.approx(math.log(2), abs=1e-9)


def test_bce_clips_confident_mistakes() -> None:
    loss = bce_loss(np.zeros((2, 2)), np.ones((2, 2)))
    assert math.isfinite(loss)
    assert loss == pytest.approx(-math.log(1e-7), rel=1e-6)


def test_seg_loss_is_dice_plus_bce(rng) -> None:
    pred = rng.uniform(size=(12, 12))
    gt = (rng.uniform(size=(12, 12)) > 0.5).astype(np.float64)
    assert seg_loss(pred, gt) == dice_loss(pred, gt) + bce_loss(pred, gt)


def test_maps_outside_unit_range_are_rejected() -> None:
    with pytest.raises(ValidationError):
        dice_loss(np.full((2, 2), 2.0), np.zeros((2, 2)))


def test_map_dimension_mismatch() -> None:
    with pytest.raises(DimensionMismatchError):
        bce_loss(np.zeros((2, 2)), np.zeros((3, 2)))


def test_mask_lower_boundary_finds_lowest_rows() -> None:
    alpha = np.zeros((12, 10))
    alpha[5:10, 3:7] = 1.0
    boundary = mask_lower_boundary(alpha)
    assert boundary.tolist() == [[3.0, 9.0], [4.0, 9.0], [5.0, 9.0], [6.0, 9.0]]
    assert mask_lower_boundary(alpha, (4.2, 5.0)).tolist() == [[5.0, 9.0]]


def test_mask_lower_boundary_rescales_uint8() -> None:
    alpha = np.zeros((4, 4), dtype=np.uint8)
    alpha[1, 1] = 200
    alpha[3, 1] = 100
    assert mask_lower_boundary(alpha).tolist() == [[1.0, 1.0]]


def test_chinline_deviation_to_straight_boundary() -> None:
    boundary = np.array([[float(x), 10.0] for x in range(21)])
    jaw = Shape(np.array([[2.0, 12.0], [10.0, 12.0], [18.0, 12.0]]))
    assert chinline_deviation(boundary, jaw) == pytest.approx(2.0)


def test_chinline_deviation_uses_segments_not_vertices() -> None:
    boundary = np.array([[0.0, 0.0], [10.0, 0.0]])
    jaw = Shape(np.array([[5.0, 3.0], [5.0, -1.0]]))
    assert chinline_deviation(boundary, jaw) == pytest.approx(2.0)


def test_chinline_deviation_needs_a_boundary() -> None:
    jaw = Shape(np.array([[0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(NoFootprintError):
        chinline_deviation(np.zeros((0, 2)), jaw)


def test_footprint_chinline_deviation() -> None:
    footprint = np.zeros((20, 30))
    footprint[:11, :21] = 1.0
    jaw = Shape(np.array([[2.0, 10.0], [10.0, 10.0], [18.0, 10.0]]))
    assert footprint_chinline_deviation(footprint, jaw) == pytest.approx(0.0)

    with pytest.raises(NoFootprintError):
        footprint_chinline_deviation(np.zeros((20, 30)), jaw)


def test_dice_loss_of_half_coverage_is_one_third() -> None:
    pred = np.zeros((8, 8))
    pred[:, :4] = 1
    assert dice_loss(pred, np.ones((8, 8))) == pytest.approx(1 / 3, abs=1e-6)


def test_bce_of_single_confident_pixel() -> None:
    assert bce_loss(np.array([[0.9]]), np.array([[1.0]])) == pytest.approx(-math.log(0.9), rel=1e-12)


def test_reconstruction_loss_of_brightened_image(rng) -> None:
    a = rng.uniform(0.0, 0.9, size=(24, 24))
    windows = np.lib.stride_tricks.sliding_window_view(a, (8, 8)).mean(axis=(2, 3))
    c1 = 0.01 ** 2
    luminance = (2 * windows * (windows + 0.1) + c1) / (windows ** 2 + (windows + 0.1) ** 2 + c1)
    expected = 0.1 - float(np.mean(luminance))
    assert reconstruction_loss(a, a + 0.1, data_range=1.0) == pytest.approx(expected, rel=1e-9)


def test_reconstruction_loss_increases_along_a_blend(rng) -> None:
    a = rng.integers(0, 256, size=(32, 32)).astype(np.float64)
    b = rng.integers(0, 256, size=(32, 32)).astype(np.float64)
    losses = [reconstruction_loss(a, (1 - t) * a + t * b) for t in (0.0, 0.5, 1.0)]
    assert losses[0] == pytest.approx(-1.0, abs=1e-9)
    assert losses[0] < losses[1] < losses[2]


def test_chinline_deviation_is_bounded_by_jaw_offsets(rng) -> None:
    boundary = np.array([[float(x), 40.0] for x in range(101)])
    for k in (0.5, 2.0, 7.0):
        offsets = rng.uniform(-k, k, 12)
        jaw = Shape(np.column_stack([np.linspace(5, 95, 12), 40.0 + offsets]))
        deviation = chinline_deviation(boundary, jaw)
        assert deviation <= k
        assert deviation == pytest.approx(float(np.mean(np.abs(offsets))), abs=1e-12)
