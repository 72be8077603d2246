import math

import numpy as np
import pytest

from src.models import MASK17_INDICES, ClassLabel, FaceAnnotation, MaskTemplate, zero_based
from src.pdm_model import build_model
from src.shape_core import Shape, SimilarityTransform
from src.synthetic import FaceGenerator, SyntheticOptions, generate_corpus, make_templates


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_similarity(rng: np.random.Generator) -> SimilarityTransform:
    return SimilarityTransform(
        scale=float(rng.uniform(0.5, 3.0)),
        rotation=float(rng.uniform(-math.pi, math.pi)),
        translation=(float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50))),
    )


def orthonormal_modes(mean: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """count unit vectors orthogonal to each other and to the similarity directions of mean."""
    points = mean.reshape(-1, 2)
    n = points.shape[0]
    ones, zeros = np.ones(n), np.zeros(n)
    similarity = [
        np.column_stack([ones, zeros]).reshape(-1),
        np.column_stack([zeros, ones]).reshape(-1),
        mean,
        np.column_stack([-points[:, 1], points[:, 0]]).reshape(-1),
    ]
    columns = np.column_stack(similarity + [rng.normal(size=2 * n) for _ in range(count)])
    q, _ = np.linalg.qr(columns)
    return q[:, 4:]


def off_model_direction(model, rng: np.random.Generator) -> np.ndarray:
    """Unit vector orthogonal to the model modes and to the similarity directions of its mean."""
    points = model.mean.reshape(-1, 2)
    ones, zeros = np.ones(model.n_points), np.zeros(model.n_points)
    spanned = np.column_stack([
        np.column_stack([ones, zeros]).reshape(-1),
        np.column_stack([zeros, ones]).reshape(-1),
        model.mean,
        np.column_stack([-points[:, 1], points[:, 0]]).reshape(-1),
        model.modes,
        rng.normal(size=model.mean.size),
    ])
    q, _ = np.linalg.qr(spanned)
    return q[:, -1]


def grid_corpus(rng: np.random.Generator, n_points: int = 17):
    """Shapes mean + b1 p1 + b2 p2 on a symmetric grid, already Procrustes-aligned."""
    raw = rng.normal(size=(n_points, 2))
    centered = raw - raw.mean(axis=0)
    mean = (centered / math.sqrt(np.mean(np.sum(centered ** 2, axis=1)))).reshape(-1)
    modes = orthonormal_modes(mean, 2, rng)
    corpus = [
        Shape.from_flat(mean + b1 * modes[:, 0] + b2 * modes[:, 1])
        for b1 in (-2.0, -1.0, 0.0, 1.0, 2.0)
        for b2 in (-1.0, 0.0, 1.0)
    ]
    return corpus, mean, modes


@pytest.fixture(scope="session")
def synthetic_corpus():
    opts = SyntheticOptions(n=80, modes=3, noise=0.5, yaw_range=32.0, seed=7)
    generator = FaceGenerator(opts.modes, np.random.default_rng(opts.seed))
    return generate_corpus(opts, generator)


@pytest.fixture(scope="session")
def mask17_model(synthetic_corpus):
    shapes = [shape.subset(zero_based(MASK17_INDICES)) for shape in synthetic_corpus.shapes]
    return build_model(shapes, variance_fraction=0.98)


@pytest.fixture(scope="session")
def templates():
    return make_templates()


@pytest.fixture(scope="session")
def opaque_templates(templates):
    """The synthetic templates with fully opaque random-colour artwork."""
    rng = np.random.default_rng(99)
    opaque = []
    for template in templates:
        image = rng.integers(0, 256, size=template.image.shape, dtype=np.uint8)
        image[..., 3] = 255
        opaque.append(MaskTemplate(
            name=template.name,
            view=template.view,
            image=image,
            landmarks=template.landmarks,
            triangulation=template.triangulation,
            nose_bridge=template.nose_bridge,
        ))
    return opaque


def face_with_mask_points(points17: np.ndarray, label: ClassLabel = ClassLabel.NONE) -> FaceAnnotation:
    """68-point face whose mask landmarks are points17, jaw ends and nose bridge placed beside them."""
    points = np.zeros((68, 2))
    points[:] = points17.mean(axis=0)
    points[zero_based(MASK17_INDICES)] = points17
    points[0] = points17[0] - (points17[1] - points17[0])
    points[16] = points17[14] + (points17[14] - points17[13])
    points[27] = points17[15] - np.array([0.0, 1.0])
    return FaceAnnotation(landmarks=Shape(points), class_label=label)
