"""Mask put-on: landmark selection, view choice, shape regularization and overlay."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import RegistryIncompleteError, ShapeArityError, ValidationError
from .models import (
    LEFT_JAW,
    MASK17_INDICES,
    NOSE_BRIDGE,
    RIGHT_JAW,
    SLA_INDICES,
    ClassLabel,
    FaceAnnotation,
    MaskTemplate,
    Method,
    OverlayJob,
    OverlayResult,
    View,
    zero_based,
)
from .pdm_model import FitOptions, FitResult, ShapeModel, fit
from .raster import apply_affine, composite, fit_affine, footprint_map, warp_template
from .shape_core import Shape

logger = logging.getLogger(__name__)

DEFAULT_YAW_THRESHOLD = 0.25


@dataclass
class OverlayOptions:
    yaw_threshold: float = DEFAULT_YAW_THRESHOLD
    landmark_subset: str = "mask17"  # which points the shape model covers
    fit: FitOptions = field(default_factory=FitOptions)


def select_landmarks_17(face: FaceAnnotation) -> Shape:
    """Face points 2..16, 30, 34 (1-based), in mask-template order."""
    return face.landmarks.subset(zero_based(MASK17_INDICES))


def yaw_proxy(face: FaceAnnotation) -> float:
    """(d_L - d_R) / (d_L + d_R) from the nose bridge to the outer jaw points."""
    bridge = face.point(NOSE_BRIDGE)
    d_left = float(np.linalg.norm(bridge - face.point(LEFT_JAW)))
    d_right = float(np.linalg.norm(bridge - face.point(RIGHT_JAW)))
    total = d_left + d_right
    return 0.0 if total == 0 else (d_left - d_right) / total


def view_of(face: FaceAnnotation, threshold: float = DEFAULT_YAW_THRESHOLD) -> View:
    """Front when |r| <= threshold; otherwise the side the nose has turned toward."""
    r = yaw_proxy(face)
    if abs(r) <= threshold:
        return View.FRONT
    return View.RIGHT_PROFILE if r > 0 else View.LEFT_PROFILE


def select_template(
    face: FaceAnnotation,
    registry: Sequence[MaskTemplate],
    threshold: float = DEFAULT_YAW_THRESHOLD,
) -> MaskTemplate:
    by_view: dict[View, MaskTemplate] = {}
    for template in registry:
        by_view.setdefault(template.view, template)
    missing = [view.value for view in View if view not in by_view]
    if missing:
        raise RegistryIncompleteError(f"Template registry has no template for: {', '.join(missing)}")

    view = view_of(face, threshold)
    template = by_view[view]
    logger.debug(f"Yaw proxy {yaw_proxy(face):+.3f} -> {view.value} template '{template.name}'")
    return template


def fit_landmarks(
    face: FaceAnnotation,
    model: ShapeModel,
    opts: Optional[OverlayOptions] = None,
) -> tuple[Shape, FitResult]:
    """Fit the model to the configured landmark subset; returns the fitted 17 points."""
    opts = opts or OverlayOptions()
    if opts.landmark_subset == "mask17":
        observed = select_landmarks_17(face)
    elif opts.landmark_subset == "ibug68":
        observed = face.landmarks
    else:
        raise ValidationError(f"Unknown landmark subset '{opts.landmark_subset}'")

    if model.n_points != observed.n_points:
        raise ShapeArityError(
            f"Model covers {model.n_points} points but subset '{opts.landmark_subset}' has {observed.n_points}"
        )

    result = fit(model, observed, opts.fit)
    fitted = result.fitted_shape
    if opts.landmark_subset == "ibug68":
        fitted = fitted.subset(zero_based(MASK17_INDICES))
    return fitted, result


def regularize_landmarks(
    face: FaceAnnotation,
    model: ShapeModel,
    opts: Optional[OverlayOptions] = None,
) -> Shape:
    """Shape-model regularized version of the face's 17 mask landmarks."""
    fitted, _ = fit_landmarks(face, model, opts)
    return fitted


def sla_target(face: FaceAnnotation, template: MaskTemplate) -> Shape:
    """Template landmarks moved by the affine least-squares fit of six correspondences."""
    source = template.sla_anchors()
    destination = face.landmarks.points[zero_based(SLA_INDICES)]
    matrix = fit_affine(source, destination)
    return Shape(apply_affine(matrix, template.landmarks.points))


def _bypass(job: OverlayJob) -> OverlayResult:
    logger.warning("Class label 'correct': bypassing mask overlay")
    return OverlayResult(
        image=job.image.copy(),
        method=Method.BYPASS,
        footprint=np.zeros(job.image.shape[:2]),
        warnings=["bypass"],
    )


def overlay_pipeline(
    job: OverlayJob,
    model: Optional[ShapeModel],
    registry: Sequence[MaskTemplate],
    method: Method,
    opts: Optional[OverlayOptions] = None,
) -> OverlayResult:
    """Put a mask on the face of the job with the chosen alignment method."""
    opts = opts or OverlayOptions()
    face = job.annotation
    if face.class_label is ClassLabel.CORRECT:
        return _bypass(job)

    template = select_template(face, registry, opts.yaw_threshold)
    fit_result = None

    if method is Method.DLA_SSA:
        if model is None:
            raise ValidationError("dla_ssa overlay needs a shape model")
        target, fit_result = fit_landmarks(face, model, opts)
    elif method is Method.DLA:
        target = select_landmarks_17(face)
    elif method is Method.SLA:
        target = sla_target(face, template)
    else:
        raise ValidationError(f"Unsupported overlay method '{method.value}'")

    warp = warp_template(template, target, bounds=job.image.shape[:2])
    image = composite(job.image, warp.fragment, warp.offset)
    footprint = footprint_map(job.image.shape[:2], warp.fragment, warp.offset)
    logger.info(f"Overlay {job.name or 'job'}: method={method.value}, template='{template.name}'")

    return OverlayResult(
        image=image,
        method=method,
        footprint=footprint,
        used_landmarks=target,
        template_used=template.name,
        fit=fit_result,
        warnings=list(warp.warnings),
    )
