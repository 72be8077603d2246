"""Seeded synthetic face corpora, mask templates and evaluation cases.

Faces are a parametric 68-point head (iBUG order) with a depth coordinate,
deformed along a few orthonormal shape modes, turned by a yaw angle,
projected orthographically and placed in the image by a similarity pose.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, ImageDraw
from scipy.spatial import ConvexHull, Delaunay

from .errors import ValidationError
from .models import (
    MASK17_INDICES,
    NOSE_BRIDGE,
    ClassLabel,
    Convention,
    LandmarkEntry,
    LandmarkFile,
    MaskTemplate,
    View,
    zero_based,
)
from .raster import triangle_area
from .shape_core import Shape, SimilarityTransform, apply_transform
from . import storage

logger = logging.getLogger(__name__)

MODE_NAMES = ("face_width", "chin_length", "jaw_fullness", "mouth_width", "eye_spacing", "nose_length")
MODE_STD_FIRST = 0.5  # model units (unit-norm mode vector, RMS-1 face)
MODE_STD_DECAY = 0.8
MAX_YAW = 45.0
PROFILE_YAW = 26.0
HALF_PROFILE_YAW = (20.0, 32.0)

IMAGE_SIZE = 256
FACE_SCALE = 55.0  # px per model unit
TEMPLATE_SCALE = 100.0
TEMPLATE_MARGIN = 10

BACKGROUND = (70, 90, 110, 255)
SKIN = (224, 189, 160, 255)
FEATURE = (90, 60, 40, 255)
LIPS = (180, 80, 80, 255)
MASK_FILL = (190, 215, 235, 255)
MASK_PLEAT = (150, 178, 205, 255)


@dataclass
class SyntheticOptions:
    n: int = 130
    modes: int = 3
    noise: float = 0.5  # px, training landmarks
    yaw_range: float = 32.0  # degrees, training yaw drawn from [-R, R]
    seed: int = 0
    cases: int = 40  # half-profile evaluation faces
    case_noise: float = 2.0  # px
    frontal_cases: int = 10

    def validate(self) -> list[str]:
        errors = []
        if self.n < 2:
            errors.append("--n must be at least 2")
        if not 0 <= self.modes <= len(MODE_NAMES):
            errors.append(f"--modes must be between 0 and {len(MODE_NAMES)}")
        if self.noise < 0 or self.case_noise < 0:
            errors.append("noise levels must be non-negative")
        if not 0 <= self.yaw_range <= MAX_YAW:
            errors.append(f"--yaw-range must be between 0 and {MAX_YAW:g} degrees")
        if self.cases < 0 or self.frontal_cases < 0:
            errors.append("case counts must be non-negative")
        return errors


def _base_face_raw() -> np.ndarray:
    """Un-normalized 68 x 3 head; x right, y down, z toward the camera."""
    points = []

    phi = np.pi * np.arange(17) / 16
    points += list(zip(-0.95 * np.cos(phi), -0.1 + 1.1 * np.sin(phi), -0.35 + 0.35 * np.sin(phi)))

    arch = 0.08 * np.sin(np.linspace(0, np.pi, 5))
    for xs in (np.linspace(-0.8, -0.2, 5), np.linspace(0.2, 0.8, 5)):
        points += list(zip(xs, -0.5 - arch, np.full(5, 0.15)))

    points += list(zip(np.zeros(4), np.linspace(-0.3, 0.15, 4), np.linspace(0.45, 0.7, 4)))
    base_x = np.linspace(-0.2, 0.2, 5)
    spread = np.abs(base_x) / 0.2
    points += list(zip(base_x, 0.28 - 0.05 * spread, 0.45 - 0.1 * spread))

    eye_angles = np.array([np.pi, 2 * np.pi / 3, np.pi / 3, 0, -np.pi / 3, -2 * np.pi / 3])
    for cx in (-0.42, 0.42):
        points += list(zip(cx + 0.17 * np.cos(eye_angles), -0.3 - 0.07 * np.sin(eye_angles), np.full(6, 0.1)))

    outer = np.pi - np.arange(12) * (2 * np.pi / 12)
    points += list(zip(0.36 * np.cos(outer), 0.62 - 0.13 * np.sin(outer), 0.3 - 0.1 * np.abs(np.cos(outer))))
    inner = np.pi - np.arange(8) * (2 * np.pi / 8)
    points += list(zip(0.24 * np.cos(inner), 0.62 - 0.04 * np.sin(inner), np.full(8, 0.28)))

    return np.array(points, dtype=np.float64)


def base_face() -> np.ndarray:
    """Head scaled so its frontal projection has centroid 0 and RMS radius 1."""
    raw = _base_face_raw()
    frontal = raw[:, :2]
    centered = frontal - frontal.mean(axis=0)
    radius = math.sqrt(float(np.mean(np.sum(centered ** 2, axis=1))))
    head = np.column_stack([centered, raw[:, 2] - raw[:, 2].mean()])
    return head / radius


def _raw_deformations(raw: np.ndarray) -> list[np.ndarray]:
    x, y = raw[:, 0], raw[:, 1]
    index = np.arange(68) + 1
    jaw = index <= 17
    eyes_brows = ((index >= 18) & (index <= 27)) | ((index >= 37) & (index <= 48))
    nose = (index >= 28) & (index <= 36)
    mouth = index >= 49
    zeros = np.zeros(68)

    return [
        np.column_stack([x, zeros]),
        np.column_stack([zeros, np.maximum(0.0, y - 0.2)]),
        np.column_stack([np.where(jaw, x * (1 - np.abs(x) / 0.95), 0), zeros]),
        np.column_stack([np.where(mouth, x, 0), zeros]),
        np.column_stack([np.where(eyes_brows, np.sign(x), 0), zeros]),
        np.column_stack([zeros, np.where(nose, y + 0.3, 0)]),
    ]


def deformation_modes(count: int) -> np.ndarray:
    """count x 136 orthonormal shape modes, orthogonal to the frontal similarity directions."""
    frontal = base_face()[:, :2]
    ones, zeros = np.ones(68), np.zeros(68)
    similarity = [
        np.column_stack([ones, zeros]),
        np.column_stack([zeros, ones]),
        frontal,
        np.column_stack([-frontal[:, 1], frontal[:, 0]]),
    ]
    deformations = _raw_deformations(_base_face_raw())[:count]
    columns = np.column_stack([d.reshape(-1) for d in similarity + deformations])
    q, _ = np.linalg.qr(columns)
    modes = q[:, len(similarity):].T.copy()
    for j, deformation in enumerate(deformations):
        if modes[j] @ deformation.reshape(-1) < 0:
            modes[j] = -modes[j]
    return modes


def project(head: np.ndarray, yaw_degrees: float) -> np.ndarray:
    """Orthographic view of a head turned by yaw (positive turns the nose to image right)."""
    yaw = math.radians(yaw_degrees)
    x = head[:, 0] * math.cos(yaw) + head[:, 2] * math.sin(yaw)
    return np.column_stack([x, head[:, 1]])


class FaceGenerator:
    """Draws synthetic 68-point faces from a seeded generator."""

    def __init__(self, n_modes: int, rng: np.random.Generator,
                 face_scale: float = FACE_SCALE, image_size: int = IMAGE_SIZE):
        self.rng = rng
        self.head = base_face()
        self.modes = deformation_modes(n_modes)
        self.mode_std = MODE_STD_FIRST * MODE_STD_DECAY ** np.arange(n_modes)
        self.face_scale = face_scale
        self.image_size = image_size

    def head_with(self, b: np.ndarray) -> np.ndarray:
        offset = (b @ self.modes).reshape(68, 2) if b.size else np.zeros((68, 2))
        head = self.head.copy()
        head[:, :2] += offset
        return head

    def random_b(self, limit_sigmas: Optional[float] = None) -> np.ndarray:
        b = self.rng.normal(0.0, 1.0, self.mode_std.size)
        if limit_sigmas is not None:
            b = np.clip(b, -limit_sigmas, limit_sigmas)
        return b * self.mode_std

    def random_pose(self) -> SimilarityTransform:
        scale = self.face_scale * self.rng.uniform(0.9, 1.1)
        rotation = math.radians(self.rng.uniform(-8.0, 8.0))
        center = self.image_size / 2
        tx = center + self.rng.uniform(-8.0, 8.0)
        ty = center - 10 + self.rng.uniform(-8.0, 8.0)
        return SimilarityTransform(scale, rotation, (tx, ty))

    def face(self, yaw_degrees: float, b: np.ndarray, pose: SimilarityTransform) -> Shape:
        """Noise-free face landmarks in image pixels."""
        return apply_transform(pose, Shape(project(self.head_with(b), yaw_degrees)))

    def add_noise(self, shape: Shape, sigma: float) -> Shape:
        if sigma == 0:
            return shape
        return Shape(shape.points + self.rng.normal(0.0, sigma, shape.points.shape))


def render_face(landmarks: Shape, size: int = IMAGE_SIZE) -> np.ndarray:
    """Flat-shaded RGBA raster of a face drawn from its 68 landmarks."""
    pts = landmarks.points
    image = Image.new("RGBA", (size, size), BACKGROUND)
    draw = ImageDraw.Draw(image)

    def poly(indices):
        return [tuple(map(float, pts[i - 1])) for i in indices]

    left, right = pts[0], pts[16]
    center = (left + right) / 2
    half_width = float(np.linalg.norm(right - left)) / 2
    across = (right - left) / (2 * half_width)
    up = np.array([across[1], -across[0]])
    arc = [tuple(map(float, center + half_width * (math.cos(a) * across + 0.9 * math.sin(a) * up)))
           for a in np.linspace(0, np.pi, 24)]
    draw.polygon(poly(range(1, 18)) + arc, fill=SKIN)

    draw.line(poly(range(18, 23)), fill=FEATURE, width=3)
    draw.line(poly(range(23, 28)), fill=FEATURE, width=3)
    draw.polygon(poly(range(37, 43)), fill=(250, 250, 250, 255), outline=FEATURE)
    draw.polygon(poly(range(43, 49)), fill=(250, 250, 250, 255), outline=FEATURE)
    draw.line(poly(range(28, 32)), fill=FEATURE, width=2)
    draw.line(poly(range(32, 37)), fill=FEATURE, width=2)
    draw.polygon(poly(range(49, 61)), fill=LIPS)
    draw.polygon(poly(range(61, 69)), fill=(120, 40, 40, 255))
    return np.array(image, dtype=np.uint8)


def _template_points(yaw_degrees: float) -> tuple[np.ndarray, np.ndarray]:
    """17 mask landmarks and the nose bridge (face point 28) in template pixels."""
    head = project(base_face(), yaw_degrees) * TEMPLATE_SCALE
    points = head[zero_based(MASK17_INDICES)]
    bridge = head[NOSE_BRIDGE - 1]
    corner = np.minimum(points.min(axis=0), bridge)
    return points - corner + TEMPLATE_MARGIN, bridge - corner + TEMPLATE_MARGIN


def render_template(landmarks: np.ndarray) -> np.ndarray:
    """Mask artwork covering the convex hull of its 17 landmarks."""
    width = int(math.ceil(landmarks[:, 0].max())) + TEMPLATE_MARGIN + 1
    height = int(math.ceil(landmarks[:, 1].max())) + TEMPLATE_MARGIN + 1
    image = Image.new("RGBA", (width, height), (0, 0, 0, 0))
    draw = ImageDraw.Draw(image)

    hull = [tuple(map(float, landmarks[i])) for i in ConvexHull(landmarks).vertices]
    draw.polygon(hull, fill=MASK_FILL)
    draw.line(hull + hull[:1], fill=MASK_FILL, width=3)

    # pleats between the nose anchor and the chin
    top = landmarks[15]
    chin = landmarks[7]
    left, right = landmarks[0], landmarks[14]
    for fraction in (0.35, 0.55, 0.75):
        y = float(top[1] + fraction * (chin[1] - top[1]))
        inset = 0.25 * (1 - fraction)
        x0 = float(left[0] + inset * (right[0] - left[0]))
        x1 = float(right[0] - inset * (right[0] - left[0]))
        draw.line([(x0, y), (x1, y)], fill=MASK_PLEAT, width=2)
    return np.array(image, dtype=np.uint8)


def shared_triangulation() -> tuple[tuple[int, int, int], ...]:
    """Delaunay triangulation of the front template, in canonical order."""
    simplices = Delaunay(_template_points(0.0)[0]).simplices
    return tuple(sorted(tuple(sorted(int(i) for i in tri)) for tri in simplices))


def make_templates() -> list[MaskTemplate]:
    """Front, left-profile and right-profile mask templates."""
    triangulation = shared_triangulation()
    templates = []
    for view, yaw in ((View.FRONT, 0.0), (View.LEFT_PROFILE, -PROFILE_YAW), (View.RIGHT_PROFILE, PROFILE_YAW)):
        landmarks, bridge = _template_points(yaw)
        for tri in triangulation:
            if abs(triangle_area(landmarks[list(tri)])) < 1e-6:
                raise ValidationError(f"Shared triangulation degenerates on the {view.value} template")
        templates.append(MaskTemplate(
            name=f"surgical_{view.value}",
            view=view,
            image=render_template(landmarks),
            landmarks=Shape(landmarks),
            triangulation=triangulation,
            image_path=f"surgical_{view.value}.png",
            nose_bridge=(float(bridge[0]), float(bridge[1])),
        ))
    return templates


def generate_corpus(opts: SyntheticOptions, generator: FaceGenerator) -> LandmarkFile:
    entries = []
    for i in range(opts.n):
        yaw = float(generator.rng.uniform(-opts.yaw_range, opts.yaw_range)) if opts.yaw_range > 0 else 0.0
        b = generator.random_b()
        pose = generator.random_pose()
        truth = generator.face(yaw, b, pose)
        entries.append(LandmarkEntry(
            image_path=None,
            points=generator.add_noise(truth, opts.noise),
            yaw=yaw,
        ))
    return LandmarkFile(convention=Convention.IBUG68, entries=entries)


@dataclass
class SyntheticCase:
    name: str
    image: np.ndarray
    landmarks: LandmarkFile


def generate_cases(opts: SyntheticOptions, generator: FaceGenerator) -> list[SyntheticCase]:
    """Noisy half-profile cases followed by noise-free frontal cases."""
    cases = []
    plans = [("profile", opts.case_noise, True)] * opts.cases + [("frontal", 0.0, False)] * opts.frontal_cases
    counters = {"profile": 0, "frontal": 0}
    for kind, noise, turned in plans:
        if turned:
            yaw = float(generator.rng.uniform(*HALF_PROFILE_YAW)) * (1 if generator.rng.random() < 0.5 else -1)
        else:
            yaw = 0.0
        b = generator.random_b(limit_sigmas=2.0)
        pose = generator.random_pose()
        truth = generator.face(yaw, b, pose)
        observed = generator.add_noise(truth, noise)
        name = f"{kind}_{counters[kind]:03d}"
        counters[kind] += 1
        label = ClassLabel.NONE if len(cases) % 2 == 0 else ClassLabel.INCORRECT
        cases.append(SyntheticCase(
            name=name,
            image=render_face(truth, generator.image_size),
            landmarks=LandmarkFile(convention=Convention.IBUG68, entries=[LandmarkEntry(
                image_path=f"{name}.png",
                points=observed,
                class_label=label,
                ground_truth=truth,
                yaw=yaw,
            )]),
        ))
    return cases


@dataclass
class SyntheticOutput:
    corpus_path: Path
    manifest_path: Path
    cases_dir: Path
    case_names: list[str] = field(default_factory=list)


def generate(opts: SyntheticOptions, out_dir: Union[str, Path]) -> SyntheticOutput:
    """Write corpus.json, templates/manifest.json and cases/ under out_dir."""
    errors = opts.validate()
    if errors:
        raise ValidationError("; ".join(errors))

    out_dir = Path(out_dir)
    rng = np.random.default_rng(opts.seed)
    generator = FaceGenerator(opts.modes, rng)

    corpus_path = out_dir / "corpus.json"
    storage.save_landmarks(generate_corpus(opts, generator), corpus_path)

    manifest_path = out_dir / "templates" / "manifest.json"
    storage.save_manifest(make_templates(), manifest_path)

    cases_dir = out_dir / "cases"
    cases = generate_cases(opts, generator)
    for case in cases:
        storage.save_image(case.image, cases_dir / f"{case.name}.png")
        storage.save_landmarks(case.landmarks, cases_dir / f"{case.name}.json")

    logger.info(f"Generated {opts.n} corpus shapes and {len(cases)} cases (seed {opts.seed}) in {out_dir}")
    return SyntheticOutput(
        corpus_path=corpus_path,
        manifest_path=manifest_path,
        cases_dir=cases_dir,
        case_names=[case.name for case in cases],
    )
