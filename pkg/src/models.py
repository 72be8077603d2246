"""Data models for faces, mask templates and landmark files."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import InvalidShapeError, ParseError, ShapeFitError, ValidationError
from .pdm_model import FitResult
from .shape_core import Shape

SCHEMA_VERSION = 1

# Landmark indices below are 1-based (iBUG 68-point convention).
MASK17_INDICES = tuple(range(2, 17)) + (30, 34)
SLA_INDICES = (28, 2, 16, 8, 9, 10)
CHINLINE_INDICES = tuple(range(5, 14))
NOSE_BRIDGE = 28
LEFT_JAW = 1
RIGHT_JAW = 17


def zero_based(indices) -> list[int]:
    return [i - 1 for i in indices]


class View(Enum):
    """Head view a mask template is drawn for."""
    FRONT = "front"
    LEFT_PROFILE = "left_profile"
    RIGHT_PROFILE = "right_profile"


class ClassLabel(Enum):
    """Mask-wearing class from an upstream detector."""
    CORRECT = "correct"
    INCORRECT = "incorrect"
    NONE = "none"


class Method(Enum):
    """Landmark alignment method used to put a mask on."""
    SLA = "sla"
    DLA = "dla"
    DLA_SSA = "dla_ssa"
    BYPASS = "bypass"


class Convention(Enum):
    """Point convention of a landmark file."""
    IBUG68 = "ibug68-1based"
    MASK17 = "mask17"

    @property
    def n_points(self) -> int:
        return 68 if self is Convention.IBUG68 else 17


@dataclass
class MaskTemplate:
    """RGBA mask artwork with its 17 annotated landmarks."""
    name: str
    view: View
    image: np.ndarray  # H x W x 4, uint8, straight alpha
    landmarks: Shape
    triangulation: tuple[tuple[int, int, int], ...]  # 0-based landmark triples
    image_path: Optional[str] = None
    nose_bridge: Optional[tuple[float, float]] = None  # face point 28 in template pixels

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 4:
            raise ValidationError(f"Template '{self.name}' image must be RGBA, got shape {self.image.shape}")
        if self.landmarks.n_points != len(MASK17_INDICES):
            raise ValidationError(f"Template '{self.name}' needs 17 landmarks, got {self.landmarks.n_points}")
        height, width = self.image.shape[:2]
        xs, ys = self.landmarks.points[:, 0], self.landmarks.points[:, 1]
        if np.any(xs < 0) or np.any(ys < 0) or np.any(xs > width - 1) or np.any(ys > height - 1):
            raise ValidationError(f"Template '{self.name}' has landmarks outside its {width}x{height} image")
        if not self.triangulation:
            raise ValidationError(f"Template '{self.name}' has an empty triangulation")
        for triangle in self.triangulation:
            if len(triangle) != 3 or any(not 0 <= i < 17 for i in triangle):
                raise ValidationError(f"Template '{self.name}' has invalid triangle {triangle}")
        self.triangulation = tuple(tuple(int(i) for i in tri) for tri in self.triangulation)
        if self.nose_bridge is not None:
            x, y = (float(v) for v in self.nose_bridge)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValidationError(f"Template '{self.name}' has a non-finite nose bridge anchor")
            self.nose_bridge = (x, y)

    def sla_anchors(self) -> np.ndarray:
        """Template pixels of face points 28, 2, 16, 8, 9, 10."""
        if self.nose_bridge is None:
            raise ValidationError(f"Template '{self.name}' has no nose bridge anchor for sparse alignment")
        rows = [MASK17_INDICES.index(i) for i in SLA_INDICES[1:]]
        return np.vstack([np.asarray(self.nose_bridge), self.landmarks.points[rows]])


@dataclass
class FaceAnnotation:
    """68 face landmarks (pixels) plus the detector's class label."""
    landmarks: Shape
    class_label: ClassLabel = ClassLabel.NONE
    image_ref: Optional[str] = None

    def __post_init__(self):
        if self.landmarks.n_points != 68:
            raise ValidationError(f"Face annotation needs 68 landmarks, got {self.landmarks.n_points}")

    def point(self, index: int) -> np.ndarray:
        """Landmark by 1-based index."""
        return self.landmarks.points[index - 1]


@dataclass
class OverlayJob:
    """A face raster and its annotation."""
    image: np.ndarray  # H x W x 4 uint8
    annotation: FaceAnnotation
    name: str = ""


@dataclass
class OverlayResult:
    """Composited demonstration image and how it was produced."""
    image: np.ndarray
    method: Method
    footprint: np.ndarray  # H x W mask alpha in [0, 1]
    used_landmarks: Optional[Shape] = None
    template_used: Optional[str] = None
    fit: Optional[FitResult] = None
    warnings: list[str] = field(default_factory=list)


def _parse_points(raw, expected: Optional[int], path: Optional[str], entry: int) -> Shape:
    try:
        shape = Shape(np.asarray(raw, dtype=np.float64))
    except (InvalidShapeError, TypeError, ValueError) as e:
        raise ParseError(str(e), path=path, entry=entry) from e
    if expected is not None and shape.n_points != expected:
        raise ParseError(f"expected {expected} points, got {shape.n_points}", path=path, entry=entry)
    return shape


@dataclass
class LandmarkEntry:
    """One annotated image in a landmark file."""
    image_path: Optional[str]
    points: Shape
    class_label: Optional[ClassLabel] = None
    ground_truth: Optional[Shape] = None
    yaw: Optional[float] = None  # degrees, synthetic data only

    def to_dict(self) -> dict:
        data = {
            "image_path": self.image_path,
            "points": self.points.points.tolist(),
        }
        if self.class_label is not None:
            data["class_label"] = self.class_label.value
        if self.ground_truth is not None:
            data["ground_truth"] = self.ground_truth.points.tolist()
        if self.yaw is not None:
            data["yaw"] = self.yaw
        return data

    @classmethod
    def from_dict(cls, data: dict, expected: Optional[int] = None,
                  path: Optional[str] = None, entry: int = 0) -> "LandmarkEntry":
        if not isinstance(data, dict) or "points" not in data:
            raise ParseError("entry must be an object with 'points'", path=path, entry=entry)
        label = data.get("class_label")
        try:
            class_label = ClassLabel(label) if label is not None else None
        except ValueError as e:
            raise ParseError(f"unknown class_label '{label}'", path=path, entry=entry) from e
        truth = data.get("ground_truth")
        return cls(
            image_path=data.get("image_path"),
            points=_parse_points(data["points"], expected, path, entry),
            class_label=class_label,
            ground_truth=_parse_points(truth, expected, path, entry) if truth is not None else None,
            yaw=data.get("yaw"),
        )


@dataclass
class LandmarkFile:
    """Versioned collection of landmark annotations."""
    convention: Convention
    entries: list[LandmarkEntry] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def shapes(self) -> list[Shape]:
        return [entry.points for entry in self.entries]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "convention": self.convention.value,
            "entries": [entry.to_dict() for entry in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict, path: Optional[str] = None) -> "LandmarkFile":
        if not isinstance(data, dict):
            raise ParseError("landmark file must be a JSON object", path=path)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {version!r}", path=path)
        try:
            convention = Convention(data.get("convention"))
        except ValueError as e:
            raise ParseError(f"unknown convention {data.get('convention')!r}", path=path) from e
        entries = data.get("entries")
        if not isinstance(entries, list):
            raise ParseError("'entries' must be a list", path=path)
        return cls(
            convention=convention,
            entries=[
                LandmarkEntry.from_dict(item, convention.n_points, path=path, entry=i)
                for i, item in enumerate(entries)
            ],
            schema_version=version,
        )


def face_from_entry(entry: LandmarkEntry, label: Optional[ClassLabel] = None) -> FaceAnnotation:
    """FaceAnnotation of a 68-point landmark entry."""
    try:
        return FaceAnnotation(
            landmarks=entry.points,
            class_label=label or entry.class_label or ClassLabel.NONE,
            image_ref=entry.image_path,
        )
    except ShapeFitError as e:
        raise ParseError(str(e)) from e
