"""SLA / DLA / DLA+SSA ablation harness on a directory of annotated cases."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from jinja2 import Environment, FileSystemLoader

from .errors import ValidationError
from .metrics import footprint_chinline_deviation
from .models import (
    CHINLINE_INDICES,
    ClassLabel,
    FaceAnnotation,
    LandmarkEntry,
    MaskTemplate,
    Method,
    OverlayJob,
    zero_based,
)
from .overlay import OverlayOptions, overlay_pipeline, view_of
from .pdm_model import ShapeModel
from . import storage

logger = logging.getLogger(__name__)

METHODS = (Method.SLA, Method.DLA, Method.DLA_SSA)
CSV_HEADER = ["case", "view", "yaw", "template", "sla", "dla", "dla_ssa"]

report_env = Environment(
    loader=FileSystemLoader(Path(__file__).parent / "templates"),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)


@dataclass
class EvalCase:
    name: str
    image: np.ndarray
    entry: LandmarkEntry


@dataclass
class CaseResult:
    name: str
    view: str
    yaw: Optional[float]
    template: str
    deviations: dict[Method, float]


@dataclass
class GroupSummary:
    name: str
    count: int
    means: dict[str, float]


@dataclass
class EvalReport:
    results: list[CaseResult]
    groups: list[GroupSummary] = field(default_factory=list)

    def mean(self, method: Method) -> float:
        return float(np.mean([r.deviations[method] for r in self.results]))

    @property
    def ordering(self) -> str:
        ranked = sorted(METHODS, key=lambda m: (self.mean(m), m.value))
        return " < ".join(m.value for m in ranked)


def load_cases(cases_dir: Union[str, Path]) -> list[EvalCase]:
    """Every <name>.json with its image, ordered by case name."""
    cases_dir = Path(cases_dir)
    if not cases_dir.is_dir():
        raise ValidationError(f"Case directory {cases_dir} does not exist")
    cases = []
    for path in sorted(cases_dir.glob("*.json")):
        landmarks = storage.load_landmarks(path)
        if len(landmarks.entries) != 1:
            raise ValidationError(f"Case file {path} must hold exactly one entry")
        entry = landmarks.entries[0]
        image_path = cases_dir / (entry.image_path or f"{path.stem}.png")
        cases.append(EvalCase(name=path.stem, image=storage.load_image(image_path), entry=entry))
    if not cases:
        raise ValidationError(f"No cases found in {cases_dir}")
    return cases


def evaluate_case(
    case: EvalCase,
    model: ShapeModel,
    registry: Sequence[MaskTemplate],
    opts: Optional[OverlayOptions] = None,
) -> CaseResult:
    opts = opts or OverlayOptions()
    face = FaceAnnotation(landmarks=case.entry.points, class_label=ClassLabel.NONE, image_ref=case.entry.image_path)
    truth = case.entry.ground_truth if case.entry.ground_truth is not None else case.entry.points
    jaw = truth.subset(zero_based(CHINLINE_INDICES))
    job = OverlayJob(image=case.image, annotation=face, name=case.name)

    deviations = {}
    template = ""
    for method in METHODS:
        result = overlay_pipeline(job, model, registry, method, opts)
        deviations[method] = footprint_chinline_deviation(result.footprint, jaw)
        template = result.template_used or template

    logger.debug(f"Case {case.name}: " + ", ".join(f"{m.value}={d:.3f}" for m, d in deviations.items()))
    return CaseResult(
        name=case.name,
        view=view_of(face, opts.yaw_threshold).value,
        yaw=case.entry.yaw,
        template=template,
        deviations=deviations,
    )


def _summaries(results: list[CaseResult]) -> list[GroupSummary]:
    groups = [("all", results)]
    for view in sorted({r.view for r in results}):
        groups.append((view, [r for r in results if r.view == view]))
    return [
        GroupSummary(
            name=name,
            count=len(members),
            means={m.value: float(np.mean([r.deviations[m] for r in members])) for m in METHODS},
        )
        for name, members in groups
    ]


def run_evaluation(
    cases: Sequence[EvalCase],
    model: ShapeModel,
    registry: Sequence[MaskTemplate],
    opts: Optional[OverlayOptions] = None,
    workers: int = 1,
) -> EvalReport:
    """Evaluate all methods on every case; rows come back ordered by case name."""
    if not cases:
        raise ValidationError("No cases to evaluate")

    def run(case: EvalCase) -> CaseResult:
        return evaluate_case(case, model, registry, opts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, cases))
    else:
        results = [run(case) for case in cases]

    results.sort(key=lambda r: r.name)
    report = EvalReport(results=results, groups=_summaries(results))
    logger.info(f"Evaluated {len(results)} cases: {report.ordering}")
    return report


def report_csv(report: EvalReport) -> str:
    rows = [
        [
            r.name,
            r.view,
            "" if r.yaw is None else f"{r.yaw:.3f}",
            r.template,
            *(f"{r.deviations[m]:.6f}" for m in METHODS),
        ]
        for r in report.results
    ]
    return storage.rows_to_csv(CSV_HEADER, rows)


def report_summary(report: EvalReport) -> str:
    return report_env.get_template("report.txt.j2").render(
        cases=report.results,
        groups=report.groups,
        methods=[m.value for m in METHODS],
        ordering=report.ordering,
        chinline_first=CHINLINE_INDICES[0],
        chinline_last=CHINLINE_INDICES[-1],
    )


def save_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """Write the CSV rows to path and the text summary beside it; returns the summary path."""
    path = Path(path)
    summary_path = path.with_suffix(".summary.txt")
    storage.save_text(report_csv(report), path)
    storage.save_text(report_summary(report), summary_path)
    return summary_path
