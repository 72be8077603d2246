"""Piecewise-affine template warping and straight-alpha compositing."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ShapeArityError, ValidationError, WarpDegenerateError
from .models import MaskTemplate
from .shape_core import Shape

logger = logging.getLogger(__name__)

# Triangles with smaller area (px^2) render empty.
MIN_TRIANGLE_AREA = 1e-9
# Barycentric slack so pixels on shared edges are not dropped.
EDGE_TOLERANCE = 1e-9
# Source coordinates this close to the pixel grid are snapped onto it.
GRID_SNAP = 1e-7
# Largest unclipped fragment a warp will allocate.
MAX_FRAGMENT_PIXELS = 1 << 24


@dataclass
class WarpResult:
    """Warped RGBA fragment and where its top-left pixel lands."""
    fragment: np.ndarray  # h x w x 4 uint8
    offset: tuple[int, int]  # (x, y) in target image pixels
    warnings: list[str] = field(default_factory=list)


def triangle_area(vertices: np.ndarray) -> float:
    (ax, ay), (bx, by), (cx, cy) = vertices
    return 0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))


def fit_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares 2x3 affine matrix taking src points onto dst points."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.shape[0] < 3:
        raise ShapeArityError(f"Affine fit needs matching point sets of at least 3, got {src.shape} and {dst.shape}")
    design = np.hstack([src, np.ones((src.shape[0], 1))])
    solution, _, rank, _ = np.linalg.lstsq(design, dst, rcond=None)
    if rank < 3:
        raise ValidationError("Affine fit points are collinear")
    return solution.T


def apply_affine(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:, :2].T + matrix[:, 2]


def sample_bilinear(image: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinear samples of an H x W x C image at (x, y) coords, edge-clamped."""
    height, width = image.shape[:2]
    x = np.clip(coords[:, 0], 0, width - 1)
    y = np.clip(coords[:, 1], 0, height - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]

    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _snap(coords: np.ndarray) -> np.ndarray:
    nearest = np.rint(coords)
    return np.where(np.abs(coords - nearest) < GRID_SNAP, nearest, coords)


def _fragment_box(target: np.ndarray, bounds: Optional[tuple[int, int]]) -> tuple[int, int, int, int]:
    """(x0, y0, x1, y1) inclusive pixel box of the target, clipped to bounds (height, width)."""
    x0 = math.floor(float(target[:, 0].min()))
    y0 = math.floor(float(target[:, 1].min()))
    x1 = math.ceil(float(target[:, 0].max()))
    y1 = math.ceil(float(target[:, 1].max()))
    if bounds is not None:
        height, width = bounds
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, width - 1), min(y1, height - 1)
    elif (x1 - x0 + 1) * (y1 - y0 + 1) > MAX_FRAGMENT_PIXELS:
        raise ValidationError(
            f"Warp target spans {x1 - x0 + 1}x{y1 - y0 + 1} px; pass the face image bounds to clip it"
        )
    return x0, y0, x1, y1


def warp_template(
    template: MaskTemplate,
    target17: Shape,
    bounds: Optional[tuple[int, int]] = None,
) -> WarpResult:
    """Warp the template so its landmarks land on target17.

    Each triangle of the template's fixed triangulation is mapped by the
    affine transform its three vertex correspondences determine; pixels are
    resampled bilinearly. Pixels outside every triangle stay transparent and
    pixels on a shared edge belong to the first triangle listed. With bounds
    (height, width) only pixels inside the face image are rasterized.
    """
    if target17.n_points != template.landmarks.n_points:
        raise ShapeArityError(f"Warp target has {target17.n_points} points, template has {template.landmarks.n_points}")

    target = target17.points
    x_origin, y_origin, x_end, y_end = _fragment_box(target, bounds)
    width = max(x_end - x_origin + 1, 0)
    height = max(y_end - y_origin + 1, 0)

    fragment = np.zeros((height, width, 4), dtype=np.uint8)
    filled = np.zeros((height, width), dtype=bool)
    source_image = template.image.astype(np.float64)
    warnings = []
    rendered = 0

    for triangle in template.triangulation:
        indices = list(triangle)
        dst = target[indices]
        src = template.landmarks.points[indices]
        if abs(triangle_area(dst)) < MIN_TRIANGLE_AREA:
            message = f"Degenerate target triangle {tuple(i + 1 for i in triangle)} left empty"
            logger.warning(message)
            warnings.append(message)
            continue

        rendered += 1
        x_lo = max(math.floor(float(dst[:, 0].min())), x_origin)
        x_hi = min(math.ceil(float(dst[:, 0].max())), x_end)
        y_lo = max(math.floor(float(dst[:, 1].min())), y_origin)
        y_hi = min(math.ceil(float(dst[:, 1].max())), y_end)
        if x_lo > x_hi or y_lo > y_hi:
            continue

        to_barycentric = np.linalg.inv(np.vstack([dst.T, np.ones(3)]))
        ys, xs = np.mgrid[y_lo:y_hi + 1, x_lo:x_hi + 1]
        xs = xs.ravel()
        ys = ys.ravel()

        bary = to_barycentric @ np.vstack([xs, ys, np.ones(xs.size)])
        rows = ys - y_origin
        cols = xs - x_origin
        inside = np.all(bary >= -EDGE_TOLERANCE, axis=0) & ~filled[rows, cols]
        if not np.any(inside):
            continue

        source_coords = _snap(bary[:, inside].T @ src)
        values = sample_bilinear(source_image, source_coords)
        fragment[rows[inside], cols[inside]] = np.clip(np.rint(values), 0, 255).astype(np.uint8)
        filled[rows[inside], cols[inside]] = True

    if rendered == 0:
        raise WarpDegenerateError(f"All triangles of template '{template.name}' are degenerate on the target")

    return WarpResult(fragment=fragment, offset=(x_origin, y_origin), warnings=warnings)


def _clip_region(face_shape: tuple[int, int], fragment_shape: tuple[int, int], offset: tuple[int, int]):
    face_h, face_w = face_shape
    frag_h, frag_w = fragment_shape
    ox, oy = offset
    xa, xb = max(0, ox), min(face_w, ox + frag_w)
    ya, yb = max(0, oy), min(face_h, oy + frag_h)
    if xa >= xb or ya >= yb:
        return None
    return (slice(ya, yb), slice(xa, xb)), (slice(ya - oy, yb - oy), slice(xa - ox, xb - ox))


def _unit_scale(image: np.ndarray) -> float:
    return 255.0 if image.dtype == np.uint8 else 1.0


def composite(face_image: np.ndarray, fragment: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
    """Straight-alpha "over" of the fragment onto the face image.

    uint8 rasters are treated as 0..255, float rasters as 0..1; the result
    has the face image's dtype. Pixels where the fragment is fully
    transparent, or that it does not reach, are returned unchanged.
    """
    if face_image.ndim != 3 or face_image.shape[2] != 4 or fragment.ndim != 3 or fragment.shape[2] != 4:
        raise ValidationError("Compositing needs RGBA rasters")

    out = face_image.copy()
    region = _clip_region(face_image.shape[:2], fragment.shape[:2], offset)
    if region is None:
        return out
    face_slice, frag_slice = region

    face_scale = _unit_scale(face_image)
    base = face_image[face_slice].astype(np.float64) / face_scale
    over = fragment[frag_slice].astype(np.float64) / _unit_scale(fragment)

    alpha = over[..., 3:4]
    rgb = alpha * over[..., :3] + (1 - alpha) * base[..., :3]
    out_alpha = alpha + (1 - alpha) * base[..., 3:4]
    blended = np.concatenate([rgb, out_alpha], axis=2) * face_scale

    if face_image.dtype == np.uint8:
        blended = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    else:
        blended = blended.astype(face_image.dtype)

    untouched = alpha[..., 0] == 0
    blended[untouched] = face_image[face_slice][untouched]
    out[face_slice] = blended
    return out


def footprint_map(image_shape: tuple[int, int], fragment: np.ndarray, offset: tuple[int, int]) -> np.ndarray:
    """Fragment alpha placed on an image-sized [0, 1] map."""
    footprint = np.zeros(image_shape, dtype=np.float64)
    region = _clip_region(image_shape, fragment.shape[:2], offset)
    if region is not None:
        face_slice, frag_slice = region
        footprint[face_slice] = fragment[frag_slice][..., 3] / _unit_scale(fragment)
    return footprint
