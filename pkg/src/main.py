"""Main entry point for facemask-asm."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import LANDMARK_SUBSETS, Config
from .errors import ShapeFitError, UsageError, ValidationError
from .evaluation import load_cases, run_evaluation, save_report
from .metrics import bce_loss, dice_loss, reconstruction_loss, ssim, to_gray
from .models import (
    MASK17_INDICES,
    ClassLabel,
    Convention,
    FaceAnnotation,
    LandmarkFile,
    Method,
    OverlayJob,
    View,
    face_from_entry,
    zero_based,
)
from .overlay import OverlayOptions, fit_landmarks, overlay_pipeline, view_of
from .pdm_model import FitOptions, build_model, fit
from .synthetic import SyntheticOptions, generate
from . import storage

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[
        logging.StreamHandler(sys.stdout),
    ],
)
logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(values) -> str:
    return "[" + ", ".join(f"{float(v):.6g}" for v in values) + "]"


def _overlay_options(config: Config) -> OverlayOptions:
    return OverlayOptions(
        yaw_threshold=config.overlay.yaw_threshold,
        landmark_subset=config.overlay.landmark_subset,
        fit=FitOptions(
            tol=config.fit.tol,
            max_iter=config.fit.max_iter,
            clamp_sigmas=config.fit.clamp_sigmas,
        ),
    )


def _pick_entry(landmarks: LandmarkFile, index: int, path: str):
    if not 0 <= index < len(landmarks.entries):
        raise ValidationError(f"{path} has {len(landmarks.entries)} entries, no entry {index}")
    return landmarks.entries[index]


# ============== Commands ==============

def cmd_build_model(args, config: Config) -> int:
    landmarks = storage.load_landmarks(args.landmarks)
    entries = landmarks.entries

    if args.view:
        if landmarks.convention is not Convention.IBUG68:
            raise ValidationError("--view filtering needs 68-point landmarks")
        view = View(args.view)
        threshold = config.overlay.yaw_threshold
        entries = [e for e in entries if view_of(FaceAnnotation(landmarks=e.points), threshold) is view]
        logger.info(f"Kept {len(entries)} of {len(landmarks.entries)} shapes classified as {view.value}")

    subset = args.subset or config.overlay.landmark_subset
    shapes = [entry.points for entry in entries]
    if subset == "mask17" and landmarks.convention is Convention.IBUG68:
        shapes = [shape.subset(zero_based(MASK17_INDICES)) for shape in shapes]
    elif subset == "ibug68" and landmarks.convention is not Convention.IBUG68:
        raise ValidationError("--subset ibug68 needs a 68-point landmark file")

    variance = args.variance if args.variance is not None else config.model.variance_fraction
    model = build_model(
        shapes,
        variance_fraction=variance,
        tol=config.procrustes.tol,
        max_iter=config.procrustes.max_iter,
        workers=config.eval.workers,
    )
    storage.save_model(model, args.out)

    print(f"shapes: {len(shapes)}")
    print(f"points: {model.n_points}")
    print(f"t: {model.t}")
    print(f"eigenvalues: {_fmt(model.eigenvalues)}")
    print(f"procrustes_iterations: {model.procrustes_iterations}")
    return 0


def cmd_fit(args, config: Config) -> int:
    landmarks = storage.load_landmarks(args.landmarks)
    entry = _pick_entry(landmarks, args.entry, args.landmarks)
    model = storage.load_model(args.model)
    opts = _overlay_options(config)

    if landmarks.convention is Convention.MASK17:
        result = fit(model, entry.points, opts.fit)
    else:
        _, result = fit_landmarks(face_from_entry(entry), model, opts)

    print(f"pose: scale={result.pose.scale:.6g} rotation={result.pose.rotation:.6g} "
          f"translation=({result.pose.translation[0]:.6g}, {result.pose.translation[1]:.6g})")
    print(f"b: {_fmt(result.b)}")
    print(f"normalized_b: {_fmt(result.normalized_b)}")
    print(f"residual: {result.residual:.6g}")
    print(f"iterations: {result.iterations}")
    print(f"converged: {str(result.converged).lower()}")
    print(f"clamped: {str(result.clamped).lower()}")
    return 0


def cmd_overlay(args, config: Config) -> int:
    image = storage.load_image(args.image)
    landmarks = storage.load_landmarks(args.landmarks)
    if landmarks.convention is not Convention.IBUG68:
        raise ValidationError("overlay needs 68-point face landmarks")
    entry = _pick_entry(landmarks, args.entry, args.landmarks)
    label = ClassLabel(args.label) if args.label else None
    face = face_from_entry(entry, label)
    method = Method(args.method)

    model = storage.load_model(args.model) if method is Method.DLA_SSA else None
    registry = storage.load_manifest(args.templates)

    job = OverlayJob(image=image, annotation=face, name=Path(args.image).stem)
    result = overlay_pipeline(job, model, registry, method, _overlay_options(config))

    storage.save_image(result.image, args.out)
    if args.footprint_out:
        storage.save_map(result.footprint, args.footprint_out)

    if result.method is Method.BYPASS:
        print("bypass: class label 'correct', input written unchanged")
        return 0
    print(f"method: {result.method.value}")
    print(f"template: {result.template_used}")
    if result.fit is not None:
        print(f"residual: {result.fit.residual:.6g}")
        print(f"b: {_fmt(result.fit.b)}")
    for warning in result.warnings:
        print(f"warning: {warning}")
    return 0


def cmd_eval(args, config: Config) -> int:
    cases = load_cases(args.cases)
    model = storage.load_model(args.model)
    registry = storage.load_manifest(args.templates)
    workers = args.workers if args.workers is not None else config.eval.workers

    report = run_evaluation(cases, model, registry, _overlay_options(config), workers=workers)
    summary_path = save_report(report, args.out)

    for method in ("sla", "dla", "dla_ssa"):
        print(f"mean {method}: {report.mean(Method(method)):.4f}")
    print(f"ordering: {report.ordering}")
    print(f"report: {args.out}")
    print(f"summary: {summary_path}")
    return 0


def cmd_gen_synthetic(args, config: Config) -> int:
    seed = args.seed if args.seed is not None else config.seed
    if seed is None:
        raise UsageError("gen-synthetic needs --seed (or SHAPEFIT_SEED)")

    defaults = SyntheticOptions()
    opts = SyntheticOptions(
        n=args.n if args.n is not None else defaults.n,
        modes=args.modes if args.modes is not None else defaults.modes,
        noise=args.noise if args.noise is not None else defaults.noise,
        yaw_range=args.yaw_range if args.yaw_range is not None else defaults.yaw_range,
        seed=seed,
        cases=args.cases if args.cases is not None else defaults.cases,
        case_noise=args.case_noise if args.case_noise is not None else defaults.case_noise,
        frontal_cases=args.frontal_cases if args.frontal_cases is not None else defaults.frontal_cases,
    )
    output = generate(opts, args.out)

    print(f"corpus: {output.corpus_path}")
    print(f"templates: {output.manifest_path}")
    print(f"cases: {output.cases_dir} ({len(output.case_names)})")
    return 0


def cmd_compare(args, config: Config) -> int:
    if args.mode == "seg":
        pred = storage.load_map(args.pred)
        gt = storage.load_map(args.gt)
        dice = dice_loss(pred, gt)
        bce = bce_loss(pred, gt)
        print(f"dice_loss: {dice:.6f}")
        print(f"bce_loss: {bce:.6f}")
        print(f"seg_loss: {dice + bce:.6f}")
    else:
        pred = to_gray(storage.load_image(args.pred))
        gt = to_gray(storage.load_image(args.gt))
        value = reconstruction_loss(pred, gt, data_range=args.data_range)
        print(f"l1: {float(np.mean(np.abs(pred - gt))) / args.data_range:.6f}")
        print(f"ssim: {ssim(pred, gt, data_range=args.data_range):.6f}")
        print(f"reconstruction_loss: {value:.6f}")
    return 0


# ============== Parser ==============

def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="facemask-asm", description="Face shape models and mask overlay.")
    parser.add_argument("--debug", action="store_true", help="verbose logging")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    build = commands.add_parser("build-model", help="build a shape model from a landmark corpus")
    build.add_argument("--landmarks", required=True)
    build.add_argument("--variance", type=float)
    build.add_argument("--out", required=True)
    build.add_argument("--subset", choices=LANDMARK_SUBSETS, help="default: SHAPEFIT_LANDMARK_SUBSET")
    build.add_argument("--view", choices=[view.value for view in View])
    build.set_defaults(handler=cmd_build_model)

    fit_cmd = commands.add_parser("fit", help="fit a shape model to one landmark entry")
    fit_cmd.add_argument("--landmarks", required=True)
    fit_cmd.add_argument("--model", required=True)
    fit_cmd.add_argument("--entry", type=int, default=0)
    fit_cmd.set_defaults(handler=cmd_fit)

    overlay = commands.add_parser("overlay", help="put a mask on a face image")
    overlay.add_argument("--image", required=True)
    overlay.add_argument("--landmarks", required=True)
    overlay.add_argument("--model")
    overlay.add_argument("--templates", required=True)
    overlay.add_argument("--method", choices=[m.value for m in (Method.DLA_SSA, Method.DLA, Method.SLA)],
                         default=Method.DLA_SSA.value)
    overlay.add_argument("--label", choices=[label.value for label in ClassLabel])
    overlay.add_argument("--out", required=True)
    overlay.add_argument("--entry", type=int, default=0)
    overlay.add_argument("--footprint-out")
    overlay.set_defaults(handler=cmd_overlay)

    evaluate = commands.add_parser("eval", help="run the SLA / DLA / DLA+SSA ablation")
    evaluate.add_argument("--cases", required=True)
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--templates", required=True)
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--workers", type=int)
    evaluate.set_defaults(handler=cmd_eval)

    gen = commands.add_parser("gen-synthetic", help="write a seeded synthetic corpus, templates and cases")
    gen.add_argument("--n", type=int)
    gen.add_argument("--modes", type=int)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--yaw-range", type=float)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", required=True)
    gen.add_argument("--cases", type=int)
    gen.add_argument("--case-noise", type=float)
    gen.add_argument("--frontal-cases", type=int)
    gen.set_defaults(handler=cmd_gen_synthetic)

    compare = commands.add_parser("compare", help="segmentation or reconstruction loss between two images")
    compare.add_argument("--pred", required=True)
    compare.add_argument("--gt", required=True)
    compare.add_argument("--mode", choices=("seg", "rc"), default="seg")
    compare.add_argument("--data-range", type=float, default=255.0)
    compare.set_defaults(handler=cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    try:
        config = Config.from_env()
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return UsageError.exit_code

    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logger.error(str(e))
        return e.exit_code

    if config.debug or args.debug:
        logging.getLogger().setLevel(logging.DEBUG)

    errors = config.validate()
    if errors:
        for error in errors:
            logger.error(f"Configuration error: {error}")
        return UsageError.exit_code

    if args.command == "overlay" and args.method == Method.DLA_SSA.value and not args.model:
        logger.error("overlay --method dla_ssa needs --model")
        return UsageError.exit_code

    try:
        return args.handler(args, config)
    except ShapeFitError as e:
        logger.error(str(e))
        return e.exit_code
    except np.linalg.LinAlgError as e:
        logger.error(f"Numerical failure: {e}")
        return 3


def cli() -> None:
    """CLI entry point."""
    sys.exit(main())


if __name__ == "__main__":
    cli()
