"""File formats: landmark files, model files, template manifests, images and reports.

All structured files are JSON with an explicit ``schema_version``. Floats are
written with Python's shortest round-trip repr of IEEE-754 binary64 values
(at most 17 significant digits), so reloading reproduces them bit-exactly.
Landmark indices in files are 1-based (iBUG convention).
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ParseError, ShapeFitError
from .models import SCHEMA_VERSION, LandmarkFile, MaskTemplate, View
from .pdm_model import ShapeModel
from .raster import triangle_area
from .shape_core import Shape

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "IEEE-754 binary64, shortest round-trip decimal"


def _read_json(path: PathLike) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read file: {e.strerror}", path=str(path)) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}", path=str(path)) from e


def _write_json(path: PathLike, data: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, allow_nan=False) + "\n", encoding="utf-8")


# ============== Landmark files ==============

def load_landmarks(path: PathLike) -> LandmarkFile:
    landmarks = LandmarkFile.from_dict(_read_json(path), path=str(path))
    logger.info(f"Loaded {len(landmarks.entries)} {landmarks.convention.value} entries from {path}")
    return landmarks


def save_landmarks(landmarks: LandmarkFile, path: PathLike) -> None:
    _write_json(path, landmarks.to_dict())
    logger.info(f"Saved {len(landmarks.entries)} landmark entries to {path}")


# ============== Model files ==============

def model_to_dict(model: ShapeModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_points": model.n_points,
        "t": model.t,
        "float_format": FLOAT_FORMAT,
        "mean": [float(v) for v in model.mean],
        "modes": {
            "rows": int(model.modes.shape[0]),
            "cols": int(model.modes.shape[1]),
            "order": "row-major",
            "data": [float(v) for v in model.modes.reshape(-1)],
        },
        "eigenvalues": [float(v) for v in model.eigenvalues],
        "provenance": {
            "corpus_hash": model.corpus_hash,
            "variance_fraction": model.variance_fraction,
            "procrustes_iterations": model.procrustes_iterations,
        },
    }


def model_from_dict(data: dict, path: Optional[str] = None) -> ShapeModel:
    if not isinstance(data, dict) or data.get("schema_version") != SCHEMA_VERSION:
        raise ParseError("not a version 1 model file", path=path)
    try:
        n_points = int(data["n_points"])
        t = int(data["t"])
        modes = data["modes"]
        rows, cols = int(modes["rows"]), int(modes["cols"])
        if modes.get("order", "row-major") != "row-major":
            raise ParseError(f"unsupported mode order {modes.get('order')!r}", path=path)
        if rows != 2 * n_points or cols != t or len(modes["data"]) != rows * cols:
            raise ParseError(f"mode matrix {rows}x{cols} inconsistent with n_points={n_points}, t={t}", path=path)
        if len(data["mean"]) != 2 * n_points or len(data["eigenvalues"]) != t:
            raise ParseError("mean or eigenvalue length inconsistent with header", path=path)
        provenance = data.get("provenance", {})
        return ShapeModel(
            mean=np.array(data["mean"], dtype=np.float64),
            modes=np.array(modes["data"], dtype=np.float64).reshape(rows, cols),
            eigenvalues=np.array(data["eigenvalues"], dtype=np.float64),
            n_points=n_points,
            variance_fraction=float(provenance.get("variance_fraction", 0.0)),
            corpus_hash=str(provenance.get("corpus_hash", "")),
            procrustes_iterations=int(provenance.get("procrustes_iterations", 0)),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed model file: {e}", path=path) from e
    except ShapeFitError as e:
        raise ParseError(str(e), path=path) from e


def save_model(model: ShapeModel, path: PathLike) -> None:
    _write_json(path, model_to_dict(model))
    logger.info(f"Saved shape model (t={model.t}) to {path}")


def load_model(path: PathLike) -> ShapeModel:
    model = model_from_dict(_read_json(path), path=str(path))
    logger.info(f"Loaded shape model from {path}: {model.n_points} points, t={model.t}")
    return model


# ============== Images ==============

def load_image(path: PathLike) -> np.ndarray:
    """PNG (or any Pillow-readable raster) as H x W x 4 uint8."""
    try:
        with Image.open(path) as image:
            return np.array(image.convert("RGBA"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as e:
        raise ParseError(f"cannot read image: {e}", path=str(path)) from e


def save_image(image: np.ndarray, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Pillow picks L for H x W and RGBA for H x W x 4 uint8 arrays.
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path, format="PNG")
    logger.debug(f"Saved image {path}")


def save_map(values: np.ndarray, path: PathLike) -> None:
    """A [0, 1] map as an 8-bit grayscale PNG."""
    save_image(np.clip(np.rint(values * 255), 0, 255).astype(np.uint8), path)


def load_map(path: PathLike) -> np.ndarray:
    """Grayscale PNG as a [0, 1] map (luma of color images)."""
    try:
        with Image.open(path) as image:
            return np.array(image.convert("L"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as e:
        raise ParseError(f"cannot read image: {e}", path=str(path)) from e


# ============== Template manifests ==============

def _template_from_dict(item: dict, base_dir: Path, index: int, path: str) -> MaskTemplate:
    try:
        name = str(item["name"])
        view = View(item["view"])
        image_path = str(item["image_path"])
        landmarks = Shape(np.array(item["landmarks_17"], dtype=np.float64))
        triangulation = [tuple(int(i) for i in tri) for tri in item["triangulation"]]
        bridge = item.get("nose_bridge")
        nose_bridge = (float(bridge[0]), float(bridge[1])) if bridge is not None else None
    except (KeyError, TypeError, ValueError, ShapeFitError) as e:
        raise ParseError(f"malformed template: {e}", path=path, entry=index) from e

    for tri in triangulation:
        if len(tri) != 3 or any(not 1 <= i <= 17 for i in tri):
            raise ParseError(f"triangle {tri} indices must be three values in [1, 17]", path=path, entry=index)
    zero_based_triangles = tuple(tuple(i - 1 for i in tri) for tri in triangulation)
    if landmarks.n_points == 17:
        for tri in zero_based_triangles:
            if abs(triangle_area(landmarks.points[list(tri)])) < 1e-9:
                raise ParseError(f"triangle {tuple(i + 1 for i in tri)} is degenerate on the template", path=path, entry=index)

    try:
        return MaskTemplate(
            name=name,
            view=view,
            image=load_image(base_dir / image_path),
            landmarks=landmarks,
            triangulation=zero_based_triangles,
            image_path=image_path,
            nose_bridge=nose_bridge,
        )
    except ParseError:
        raise
    except ShapeFitError as e:
        raise ParseError(str(e), path=path, entry=index) from e


def load_manifest(path: PathLike) -> list[MaskTemplate]:
    data = _read_json(path)
    if not isinstance(data, dict) or data.get("schema_version") != SCHEMA_VERSION:
        raise ParseError("not a version 1 template manifest", path=str(path))
    items = data.get("templates")
    if not isinstance(items, list) or not items:
        raise ParseError("'templates' must be a non-empty list", path=str(path))
    base_dir = Path(path).parent
    templates = [_template_from_dict(item, base_dir, i, str(path)) for i, item in enumerate(items)]
    logger.info(f"Loaded {len(templates)} mask templates from {path}")
    return templates


def manifest_to_dict(templates: Iterable[MaskTemplate]) -> dict:
    items = []
    for template in templates:
        item = {
            "name": template.name,
            "view": template.view.value,
            "image_path": template.image_path or f"{template.name}.png",
            "landmarks_17": template.landmarks.points.tolist(),
            "triangulation": [[i + 1 for i in tri] for tri in template.triangulation],
        }
        if template.nose_bridge is not None:
            item["nose_bridge"] = list(template.nose_bridge)
        items.append(item)
    return {"schema_version": SCHEMA_VERSION, "templates": items}


def save_manifest(templates: list[MaskTemplate], path: PathLike) -> None:
    """Write the manifest and each template image next to it."""
    base_dir = Path(path).parent
    data = manifest_to_dict(templates)
    for template, item in zip(templates, data["templates"]):
        save_image(template.image, base_dir / item["image_path"])
    _write_json(path, data)
    logger.info(f"Saved {len(templates)} mask templates to {path}")


# ============== Reports ==============

def rows_to_csv(header: list[str], rows: Iterable[list]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return output.getvalue()


def save_text(text: str, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Saved {path}")
