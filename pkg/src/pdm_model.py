"""Point distribution matrix, PCA shape model and pose+shape fitting."""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CorpusTooSmallError,
    DegenerateShapeError,
    ShapeArityError,
    ValidationError,
)
from .shape_core import (
    DEFAULT_GPA_MAX_ITER,
    DEFAULT_GPA_TOL,
    ProcrustesResult,
    Shape,
    SimilarityTransform,
    apply_transform,
    generalized_procrustes,
    solve_similarity,
)

logger = logging.getLogger(__name__)

DEFAULT_VARIANCE_FRACTION = 0.98
# Model-space variance below which a PCA direction is numerical noise.
EIGENVALUE_FLOOR = 1e-18


def corpus_hash(corpus: Sequence[Shape]) -> str:
    """SHA-256 over the little-endian float64 coordinates, in corpus order."""
    digest = hashlib.sha256()
    for shape in corpus:
        digest.update(np.ascontiguousarray(shape.points, dtype="<f8").tobytes())
    return digest.hexdigest()


@dataclass
class PointDistributionMatrix:
    """K x 2N matrix of aligned shapes flattened as x1, y1, ..., xN, yN."""
    data: np.ndarray
    n_points: int
    procrustes: ProcrustesResult

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def assemble_pdm(
    corpus: Sequence[Shape],
    tol: float = DEFAULT_GPA_TOL,
    max_iter: int = DEFAULT_GPA_MAX_ITER,
    workers: int = 1,
) -> PointDistributionMatrix:
    """Procrustes-align the corpus and stack it into a PDM.

    Aligned shapes are projected into the tangent space of the mean
    (rescaled so that <x, mean> = |mean|^2), which keeps the rows on a
    hyperplane and the PCA modes orthogonal to the mean.
    """
    if len(corpus) < 2:
        raise CorpusTooSmallError(f"Shape model needs at least 2 shapes, got {len(corpus)}")

    procrustes = generalized_procrustes(corpus, tol=tol, max_iter=max_iter, workers=workers)
    mean = procrustes.mean.flatten()
    mean_sq = float(mean @ mean)

    rows = []
    for index, shape in enumerate(procrustes.aligned):
        vector = shape.flatten()
        overlap = float(vector @ mean)
        if overlap <= 1e-12 * mean_sq:
            raise DegenerateShapeError(f"Shape {index} is orthogonal to the corpus mean")
        rows.append(vector * (mean_sq / overlap))

    return PointDistributionMatrix(
        data=np.stack(rows),
        n_points=procrustes.mean.n_points,
        procrustes=procrustes,
    )


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """f = mean + modes @ b, with per-mode variances."""
    mean: np.ndarray
    modes: np.ndarray
    eigenvalues: np.ndarray
    n_points: int
    variance_fraction: float = DEFAULT_VARIANCE_FRACTION
    corpus_hash: str = ""
    procrustes_iterations: int = 0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        eigenvalues = np.array(self.eigenvalues, dtype=np.float64).reshape(-1)
        modes = np.array(self.modes, dtype=np.float64).reshape(mean.size, eigenvalues.size)

        if mean.size != 2 * self.n_points:
            raise ValidationError(f"Mean has {mean.size} values for {self.n_points} points")
        if np.any(eigenvalues <= 0):
            raise ValidationError("Eigenvalues must be positive")
        if np.any(np.diff(eigenvalues) > 0):
            raise ValidationError("Eigenvalues must be non-increasing")
        if not np.allclose(modes.T @ modes, np.eye(eigenvalues.size), rtol=0, atol=1e-9):
            raise ValidationError("Mode columns are not orthonormal")

        for name, value in (("mean", mean), ("modes", modes), ("eigenvalues", eigenvalues)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def t(self) -> int:
        return self.eigenvalues.size

    @property
    def mean_shape(self) -> Shape:
        return Shape.from_flat(self.mean)

    @property
    def std_devs(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    def __repr__(self) -> str:
        return f"ShapeModel(n_points={self.n_points}, t={self.t})"


def _sign_normalize(modes: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    modes = modes.copy()
    for j in range(modes.shape[1]):
        pivot = int(np.argmax(np.abs(modes[:, j])))
        if modes[pivot, j] < 0:
            modes[:, j] = -modes[:, j]
    return modes


def _retained_modes(eigenvalues: np.ndarray, variance_fraction: float, limit: int) -> int:
    positive = eigenvalues[eigenvalues > EIGENVALUE_FLOOR]
    if positive.size == 0:
        return 0
    cumulative = np.cumsum(positive) / positive.sum()
    t = int(np.searchsorted(cumulative, variance_fraction * (1 - 1e-12)) + 1)
    return min(t, positive.size, limit)


def build_model(
    corpus: Sequence[Shape],
    variance_fraction: float = DEFAULT_VARIANCE_FRACTION,
    tol: float = DEFAULT_GPA_TOL,
    max_iter: int = DEFAULT_GPA_MAX_ITER,
    workers: int = 1,
) -> ShapeModel:
    """Build the PCA shape model of a landmark corpus.

    Keeps the fewest modes whose eigenvalues reach ``variance_fraction`` of
    the total variance about the Procrustes mean (divisor K-1).
    """
    if not 0 < variance_fraction <= 1:
        raise ValidationError(f"variance_fraction must be in (0, 1], got {variance_fraction}")

    pdm = assemble_pdm(corpus, tol=tol, max_iter=max_iter, workers=workers)
    mean = pdm.procrustes.mean.flatten()
    centered = pdm.data - mean
    covariance = centered.T @ centered / (pdm.rows - 1)

    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]

    t = _retained_modes(eigenvalues, variance_fraction, limit=min(pdm.rows - 1, pdm.cols))
    modes = _sign_normalize(eigenvectors[:, :t])

    model = ShapeModel(
        mean=mean,
        modes=modes,
        eigenvalues=eigenvalues[:t],
        n_points=pdm.n_points,
        variance_fraction=variance_fraction,
        corpus_hash=corpus_hash(corpus),
        procrustes_iterations=pdm.procrustes.iterations,
    )
    logger.info(
        f"Built shape model: {pdm.rows} shapes, {pdm.n_points} points, t={t}, "
        f"{pdm.procrustes.iterations} Procrustes iterations"
    )
    return model


def reconstruct(model: ShapeModel, b) -> Shape:
    """Shape with flattened coordinates mean + modes @ b."""
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != model.t:
        raise ShapeArityError(f"Model has {model.t} modes, got {b.size} weights")
    return Shape.from_flat(model.mean + model.modes @ b)


def project(model: ShapeModel, aligned: Shape) -> np.ndarray:
    """Least-squares mode weights of a model-space shape."""
    if aligned.n_points != model.n_points:
        raise ShapeArityError(f"Model has {model.n_points} points, shape has {aligned.n_points}")
    return model.modes.T @ (aligned.flatten() - model.mean)


@dataclass
class FitOptions:
    tol: float = 1e-9
    max_iter: int = 50
    clamp_sigmas: float = 3.0


@dataclass
class FitResult:
    """Pose and shape parameters of a model fitted to an observation."""
    pose: SimilarityTransform
    b: np.ndarray
    fitted_shape: Shape
    residual: float
    iterations: int
    converged: bool = True
    clamped: bool = False
    objective_history: list[float] = field(default_factory=list)
    eigenvalues: Optional[np.ndarray] = None

    @property
    def normalized_b(self) -> np.ndarray:
        """Mode weights in standard deviations."""
        if self.eigenvalues is None:
            raise ValueError("Eigenvalues were not recorded for this fit")
        return self.b / np.sqrt(self.eigenvalues)


def fit(model: ShapeModel, observed: Shape, opts: Optional[FitOptions] = None) -> FitResult:
    """Fit pose and mode weights to an observed shape.

    Alternates a closed-form pose solve with b fixed and a projection of the
    inverse-posed observation onto the modes with the pose fixed, clamping
    each b_j to +-clamp_sigmas * sqrt(lambda_j). Stops when the objective,
    measured in model space (divided by the squared pose scale), drops by
    less than ``opts.tol``.
    """
    opts = opts or FitOptions()
    if observed.n_points != model.n_points:
        raise ShapeArityError(f"Model has {model.n_points} points, observation has {observed.n_points}")
    centered = observed.points - observed.centroid
    if float(np.sum(centered ** 2)) <= (1e-12 * max(1.0, float(np.max(np.abs(observed.points))))) ** 2:
        raise DegenerateShapeError("Observed shape has all points coincident")

    limits = opts.clamp_sigmas * model.std_devs
    b = np.zeros(model.t)
    history: list[float] = []
    previous: Optional[float] = None
    converged = False
    clamped = False
    iterations = 0
    pose = SimilarityTransform.identity()
    objective = float("inf")

    for iterations in range(1, opts.max_iter + 1):
        pose, objective = solve_similarity(reconstruct(model, b), observed)
        history.append(objective)
        model_objective = objective / pose.scale ** 2
        logger.debug(f"Fit iteration {iterations}: objective {objective:.6e}")

        if previous is not None and previous - model_objective < opts.tol:
            converged = True
            break
        previous = model_objective

        in_model = apply_transform(pose.inverse(), observed)
        raw = project(model, in_model)
        b = np.clip(raw, -limits, limits)
        clamped = bool(np.any(b != raw))

    if not converged:
        pose, objective = solve_similarity(reconstruct(model, b), observed)
        history.append(objective)
        logger.warning(f"Model fit did not converge within {opts.max_iter} iterations")

    if clamped:
        logger.debug("Shape parameters clamped to the plausible-shape box")

    return FitResult(
        pose=pose,
        b=b,
        fitted_shape=apply_transform(pose, reconstruct(model, b)),
        residual=objective,
        iterations=iterations,
        converged=converged,
        clamped=clamped,
        objective_history=history,
        eigenvalues=model.eigenvalues,
    )
