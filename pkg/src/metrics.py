"""Segmentation, reconstruction and chin-line alignment metrics."""

import logging
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, ImageTooSmallError, NoFootprintError, ValidationError
from .shape_core import Shape

logger = logging.getLogger(__name__)

EPSILON = 1e-7
SSIM_WINDOW = 8
REC601_LUMA = np.array([0.299, 0.587, 0.114])


def _as_map(values, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0) or np.any(values > 1):
        raise ValidationError(f"{name} must hold values in [0, 1]")
    return values


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Dimension mismatch: {a.shape} vs {b.shape}")


def dice_loss(pred, gt) -> float:
    """1 - (2 sum(pred*gt) + eps) / (sum(pred) + sum(gt) + eps)."""
    pred = _as_map(pred, "pred")
    gt = _as_map(gt, "gt")
    _check_dims(pred, gt)
    overlap = float(np.sum(pred * gt))
    return 1.0 - (2.0 * overlap + EPSILON) / (float(np.sum(pred)) + float(np.sum(gt)) + EPSILON)


def bce_loss(pred, gt) -> float:
    """Mean binary cross-entropy with pred clipped to [eps, 1 - eps]."""
    pred = _as_map(pred, "pred")
    gt = _as_map(gt, "gt")
    _check_dims(pred, gt)
    p = np.clip(pred, EPSILON, 1.0 - EPSILON)
    return float(np.mean(-(gt * np.log(p) + (1.0 - gt) * np.log(1.0 - p))))


def seg_loss(pred, gt) -> float:
    return dice_loss(pred, gt) + bce_loss(pred, gt)


def to_gray(image) -> np.ndarray:
    """Rec.601 luma of an RGB(A) raster; 2-D rasters pass through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] in (3, 4):
        return image[..., :3] @ REC601_LUMA
    raise ValidationError(f"Unsupported raster shape {image.shape}")


def ssim(a, b, data_range: float = 255.0, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all window x window uniform windows at stride 1.

    Window statistics use the population (1/n) variance and covariance.
    """
    a = to_gray(a)
    b = to_gray(b)
    _check_dims(a, b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ImageTooSmallError(f"Image {a.shape} is smaller than the {window}x{window} SSIM window")

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    # uniform_filter centers an even window at offset window // 2, so the
    # fully-inside windows are the outputs from window // 2 up to n - window // 2.
    half = window // 2
    valid = (slice(half, a.shape[0] - half + 1), slice(half, a.shape[1] - half + 1))

    def local_mean(x: np.ndarray) -> np.ndarray:
        return ndimage.uniform_filter(x, size=window, mode="constant")[valid]

    mu_a = local_mean(a)
    mu_b = local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b

    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))


def reconstruction_loss(a, b, data_range: float = 255.0) -> float:
    """Mean absolute error on [0, 1] intensities minus SSIM."""
    gray_a = to_gray(a)
    gray_b = to_gray(b)
    _check_dims(gray_a, gray_b)
    l1 = float(np.mean(np.abs(gray_a - gray_b))) / data_range
    return l1 - ssim(gray_a, gray_b, data_range=data_range)


def mask_lower_boundary(
    alpha: np.ndarray,
    x_range: Optional[tuple[float, float]] = None,
    threshold: float = 0.5,
) -> np.ndarray:
    """Lowest pixel with alpha > threshold in each column, as (x, y) points.

    ``alpha`` is a [0, 1] map (uint8 maps are rescaled); only columns within
    ``x_range`` (inclusive) are scanned.
    """
    alpha = np.asarray(alpha)
    if alpha.dtype == np.uint8:
        alpha = alpha / 255.0
    height, width = alpha.shape
    x_lo, x_hi = 0, width - 1
    if x_range is not None:
        x_lo = max(x_lo, int(np.ceil(x_range[0])))
        x_hi = min(x_hi, int(np.floor(x_range[1])))

    points = []
    for x in range(x_lo, x_hi + 1):
        rows = np.flatnonzero(alpha[:, x] > threshold)
        if rows.size:
            points.append((float(x), float(rows[-1])))
    return np.array(points, dtype=np.float64).reshape(-1, 2)


def _point_to_polyline(point: np.ndarray, polyline: np.ndarray) -> float:
    if polyline.shape[0] == 1:
        return float(np.linalg.norm(point - polyline[0]))
    start = polyline[:-1]
    segment = polyline[1:] - start
    length_sq = np.sum(segment ** 2, axis=1)
    t = np.where(length_sq > 0, np.sum((point - start) * segment, axis=1) / np.where(length_sq > 0, length_sq, 1), 0)
    t = np.clip(t, 0, 1)
    nearest = start + t[:, None] * segment
    return float(np.min(np.linalg.norm(point - nearest, axis=1)))


def chinline_deviation(mask_boundary, face_jaw: Shape) -> float:
    """Mean distance (px) from jaw landmarks to the nearest point of the boundary polyline."""
    boundary = np.asarray(mask_boundary, dtype=np.float64).reshape(-1, 2)
    if boundary.shape[0] == 0:
        raise NoFootprintError("Mask boundary is empty")
    if face_jaw.n_points < 2:
        raise ValidationError("Chin-line deviation needs at least 2 jaw points")
    return float(np.mean([_point_to_polyline(p, boundary) for p in face_jaw.points]))


def footprint_chinline_deviation(footprint: np.ndarray, face_jaw: Shape) -> float:
    """Chin-line deviation of a rendered mask footprint over the jaw's x-range."""
    xs = face_jaw.points[:, 0]
    boundary = mask_lower_boundary(footprint, (float(xs.min()), float(xs.max())))
    if boundary.shape[0] == 0:
        raise NoFootprintError("Mask footprint does not reach the jaw columns")
    return chinline_deviation(boundary, face_jaw)
