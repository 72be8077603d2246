"""Landmark shapes, similarity transforms and Procrustes alignment."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CorpusTooSmallError,
    DegenerateShapeError,
    InvalidShapeError,
    ShapeArityError,
    ValidationError,
)

logger = logging.getLogger(__name__)

DEFAULT_GPA_TOL = 1e-7
DEFAULT_GPA_MAX_ITER = 100


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Shape:
    """Ordered 2-D landmark points; row k is landmark k."""
    points: np.ndarray

    def __post_init__(self):
        try:
            points = np.array(self.points, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise InvalidShapeError(f"Landmarks are not numeric: {e}") from e
        if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] == 0:
            raise InvalidShapeError(f"Expected an (N, 2) point array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise InvalidShapeError("Shape has non-finite coordinates")
        object.__setattr__(self, "points", _readonly(points))

    @classmethod
    def from_flat(cls, vector: np.ndarray) -> "Shape":
        """Build a shape from x1, y1, ..., xN, yN."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.ndim != 1 or vector.size % 2:
            raise ShapeArityError(f"Flat shape vector must have even length, got {vector.shape}")
        return cls(vector.reshape(-1, 2))

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def flatten(self) -> np.ndarray:
        """Coordinates as x1, y1, ..., xN, yN."""
        return self.points.reshape(-1).copy()

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def rms_radius(self) -> float:
        centered = self.points - self.centroid
        return float(np.sqrt(np.mean(np.sum(centered ** 2, axis=1))))

    def subset(self, indices: Sequence[int]) -> "Shape":
        """Points at the given 0-based indices, in that order."""
        return Shape(self.points[list(indices)])

    def allclose(self, other: "Shape", atol: float = 1e-9) -> bool:
        return self.n_points == other.n_points and bool(np.allclose(self.points, other.points, rtol=0, atol=atol))

    def __repr__(self) -> str:
        return f"Shape(n_points={self.n_points})"


def _rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2 * math.pi)
    return math.pi if wrapped <= -math.pi else wrapped


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * R(rotation) * p + translation."""
    scale: float = 1.0
    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not math.isfinite(self.scale) or self.scale <= 0:
            raise ValidationError(f"Similarity scale must be positive and finite, got {self.scale}")
        if not math.isfinite(self.rotation):
            raise ValidationError("Similarity rotation must be finite")
        tx, ty = (float(v) for v in self.translation)
        if not (math.isfinite(tx) and math.isfinite(ty)):
            raise ValidationError("Similarity translation must be finite")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", _wrap_angle(float(self.rotation)))
        object.__setattr__(self, "translation", (tx, ty))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @property
    def matrix(self) -> np.ndarray:
        """The 2x2 linear part scale * R(rotation)."""
        return self.scale * _rotation_matrix(self.rotation)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.matrix.T + np.asarray(self.translation)

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        back = inv_scale * _rotation_matrix(-self.rotation)
        tx, ty = -(back @ np.asarray(self.translation))
        return SimilarityTransform(inv_scale, -self.rotation, (tx, ty))

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """self after other: p -> self(other(p))."""
        tx, ty = self.matrix @ np.asarray(other.translation) + np.asarray(self.translation)
        return SimilarityTransform(self.scale * other.scale, self.rotation + other.rotation, (tx, ty))


def apply_transform(t: SimilarityTransform, s: Shape) -> Shape:
    """Map every point of s through t, preserving order."""
    if not np.all(np.isfinite(s.points)):
        raise InvalidShapeError("Cannot transform a shape with non-finite coordinates")
    return Shape(t.apply_points(s.points))


def _is_degenerate(centered: np.ndarray, reference: np.ndarray) -> bool:
    magnitude = max(1.0, float(np.max(np.abs(reference))))
    return float(np.sum(centered ** 2)) <= (1e-12 * magnitude) ** 2


def solve_similarity(src: Shape, dst: Shape) -> tuple[SimilarityTransform, float]:
    """Closed-form least-squares similarity taking src onto dst.

    Returns the transform minimising sum ||dst_k - (s R src_k + t)||^2 over
    scale, rotation (no reflection) and translation, and that minimum.
    """
    if src.n_points != dst.n_points:
        raise ShapeArityError(f"Cannot align {src.n_points} points onto {dst.n_points}")
    if src.n_points < 2:
        raise ShapeArityError("Similarity alignment needs at least 2 points")

    src_centroid = src.centroid
    dst_centroid = dst.centroid
    x = src.points - src_centroid
    y = dst.points - dst_centroid

    if _is_degenerate(x, src.points):
        raise DegenerateShapeError("Source shape has all points coincident")

    norm_sq = float(np.sum(x ** 2))
    a = float(np.sum(x * y)) / norm_sq
    b = float(np.sum(x[:, 0] * y[:, 1] - x[:, 1] * y[:, 0])) / norm_sq
    scale = math.hypot(a, b)
    if scale == 0.0:
        raise DegenerateShapeError("Target shape carries no similarity component of the source")

    rotation = math.atan2(b, a)
    linear = scale * _rotation_matrix(rotation)
    tx, ty = dst_centroid - linear @ src_centroid
    transform = SimilarityTransform(scale, rotation, (tx, ty))

    residual = float(np.sum((dst.points - transform.apply_points(src.points)) ** 2))
    return transform, residual


def normalize_shape(shape: Shape) -> Shape:
    """Translate the centroid to the origin and scale the RMS point radius to 1."""
    centered = shape.points - shape.centroid
    radius = float(np.sqrt(np.mean(np.sum(centered ** 2, axis=1))))
    if _is_degenerate(centered, shape.points):
        raise DegenerateShapeError("Cannot normalize a shape whose points coincide")
    return Shape(centered / radius)


@dataclass
class ProcrustesResult:
    """Outcome of generalized Procrustes alignment."""
    aligned: list[Shape]
    mean: Shape
    iterations: int
    converged: bool
    sum_of_squares: list[float] = field(default_factory=list)  # one entry per alignment pass
    warning: Optional[str] = None

    def __iter__(self):
        yield self.aligned
        yield self.mean


def _check_corpus(corpus: Sequence[Shape], min_size: int = 2) -> int:
    if len(corpus) < min_size:
        raise CorpusTooSmallError(f"Corpus has {len(corpus)} shapes, at least {min_size} required")
    sizes = {shape.n_points for shape in corpus}
    if len(sizes) != 1:
        raise ShapeArityError(f"Corpus mixes shapes with point counts {sorted(sizes)}")
    n_points = sizes.pop()
    if n_points < 3:
        raise ShapeArityError(f"Procrustes alignment needs at least 3 points per shape, got {n_points}")
    return n_points


def _reference_orientation(corpus: Sequence[Shape]) -> Shape:
    """Row-order independent orientation anchor for the evolving mean."""
    stacked = np.stack([normalize_shape(shape).points for shape in corpus])
    average = Shape(stacked.mean(axis=0))
    if average.rms_radius < 1e-8:
        logger.debug("Normalized corpus average collapses, anchoring orientation on the first shape")
        return normalize_shape(corpus[0])
    return normalize_shape(average)


def _align_all(corpus: Sequence[Shape], mean: Shape, workers: int) -> tuple[list[Shape], float]:
    def align(shape: Shape) -> tuple[Shape, float]:
        transform, residual = solve_similarity(shape, mean)
        return apply_transform(transform, shape), residual

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(align, corpus))
    else:
        results = [align(shape) for shape in corpus]

    aligned = [shape for shape, _ in results]
    total = float(sum(residual for _, residual in results))
    return aligned, total


def _orient_like(shape: Shape, reference: Shape) -> Shape:
    transform, _ = solve_similarity(shape, reference)
    return Shape(shape.points @ _rotation_matrix(transform.rotation).T)


def generalized_procrustes(
    corpus: Sequence[Shape],
    tol: float = DEFAULT_GPA_TOL,
    max_iter: int = DEFAULT_GPA_MAX_ITER,
    workers: int = 1,
) -> ProcrustesResult:
    """Align a corpus to its own evolving mean.

    Each pass aligns every shape to the current mean, averages the aligned
    shapes in corpus order and renormalizes the average (centroid at the
    origin, RMS radius 1, orientation anchored to the normalized corpus
    average). Iteration stops once the mean moves less than ``tol``.
    """
    _check_corpus(corpus)

    reference = _reference_orientation(corpus)
    mean = reference
    history: list[float] = []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        aligned, total = _align_all(corpus, mean, workers)
        history.append(total)
        logger.debug(f"Procrustes pass {iterations}: sum of squares {total:.6e}")

        average = Shape(np.stack([shape.points for shape in aligned]).mean(axis=0))
        new_mean = _orient_like(normalize_shape(average), reference)
        movement = float(np.linalg.norm(new_mean.points - mean.points))
        mean = new_mean
        if movement < tol:
            converged = True
            break

    aligned, total = _align_all(corpus, mean, workers)
    history.append(total)

    warning = None
    if not converged:
        warning = f"Procrustes alignment did not converge within {max_iter} iterations"
        logger.warning(warning)

    return ProcrustesResult(
        aligned=aligned,
        mean=mean,
        iterations=iterations,
        converged=converged,
        sum_of_squares=history,
        warning=warning,
    )
