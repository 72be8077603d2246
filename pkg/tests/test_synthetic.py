import numpy as np
import pytest

from src.errors import ValidationError
from src.models import MASK17_INDICES, View, zero_based
from src.pdm_model import build_model
from src.raster import triangle_area
from src.shape_core import Shape, solve_similarity
from src.synthetic import (
    FaceGenerator,
    SyntheticOptions,
    base_face,
    deformation_modes,
    generate,
    generate_cases,
    generate_corpus,
    make_templates,
)


def small_options(**overrides) -> SyntheticOptions:
    values = dict(n=12, modes=3, noise=0.5, yaw_range=32.0, seed=5, cases=2, case_noise=2.0, frontal_cases=1)
    values.update(overrides)
    return SyntheticOptions(**values)


def test_base_face_is_normalized() -> None:
    frontal = Shape(base_face()[:, :2])
    np.testing.assert_allclose(frontal.centroid, (0.0, 0.0), atol=1e-12)
    assert frontal.rms_radius == pytest.approx(1.0)


def test_deformation_modes_are_orthonormal() -> None:
    modes = deformation_modes(6)
    np.testing.assert_allclose(modes @ modes.T, np.eye(6), atol=1e-12)
    frontal = base_face()[:, :2].reshape(-1)
    np.testing.assert_allclose(modes @ frontal, np.zeros(6), atol=1e-12)


def test_same_seed_gives_identical_corpus() -> None:
    opts = small_options()
    a = generate_corpus(opts, FaceGenerator(opts.modes, np.random.default_rng(opts.seed)))
    b = generate_corpus(opts, FaceGenerator(opts.modes, np.random.default_rng(opts.seed)))
    assert a.to_dict() == b.to_dict()


def test_no_modes_no_noise_gives_similar_copies() -> None:
    opts = small_options(modes=0, noise=0.0, yaw_range=0.0)
    corpus = generate_corpus(opts, FaceGenerator(opts.modes, np.random.default_rng(opts.seed)))
    base = Shape(base_face()[:, :2])
    for shape in corpus.shapes:
        _, residual = solve_similarity(base, shape)
        assert residual < 1e-9


def test_three_mode_generator_gives_three_model_modes() -> None:
    opts = small_options(n=130, noise=0.1, yaw_range=0.0)
    corpus = generate_corpus(opts, FaceGenerator(opts.modes, np.random.default_rng(opts.seed)))
    shapes = [shape.subset(zero_based(MASK17_INDICES)) for shape in corpus.shapes]
    assert build_model(shapes, variance_fraction=0.98).t == 3


def test_templates_share_a_valid_triangulation() -> None:
    templates = make_templates()
    assert [t.view for t in templates] == [View.FRONT, View.LEFT_PROFILE, View.RIGHT_PROFILE]
    assert len({t.triangulation for t in templates}) == 1
    for template in templates:
        for triangle in template.triangulation:
            assert abs(triangle_area(template.landmarks.points[list(triangle)])) > 1e-6


def test_cases_are_half_profile_then_frontal() -> None:
    opts = small_options(cases=4, frontal_cases=2)
    cases = generate_cases(opts, FaceGenerator(opts.modes, np.random.default_rng(opts.seed)))
    assert [c.name for c in cases] == [
        "profile_000", "profile_001", "profile_002", "profile_003", "frontal_000", "frontal_001",
    ]
    for case in cases[:4]:
        assert 20.0 <= abs(case.landmarks.entries[0].yaw) <= 32.0
    frontal = cases[4].landmarks.entries[0]
    assert frontal.yaw == 0.0
    assert np.array_equal(frontal.points.points, frontal.ground_truth.points)
    assert cases[0].image.shape == (256, 256, 4)


def test_generate_writes_reproducible_files(tmp_path) -> None:
    first = generate(small_options(), tmp_path / "a")
    second = generate(small_options(), tmp_path / "b")

    assert first.corpus_path.read_bytes() == second.corpus_path.read_bytes()
    assert first.manifest_path.read_bytes() == second.manifest_path.read_bytes()
    for name in first.case_names:
        assert (first.cases_dir / f"{name}.png").read_bytes() == (second.cases_dir / f"{name}.png").read_bytes()
        assert (first.cases_dir / f"{name}.json").read_bytes() == (second.cases_dir / f"{name}.json").read_bytes()


def test_invalid_options_are_rejected(tmp_path) -> None:
    with pytest.raises(ValidationError):
        generate(small_options(n=1), tmp_path)
    with pytest.raises(ValidationError):
        generate(small_options(yaw_range=90.0), tmp_path)
