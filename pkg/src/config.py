"""Configuration management for facemask-asm."""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

LANDMARK_SUBSETS = ("mask17", "ibug68")


def get_bool(key: str, default: bool = False) -> bool:
    """Get boolean from environment variable."""
    value = os.getenv(key, str(default)).lower()
    return value in ("true", "1", "yes", "on")


def get_optional_int(key: str) -> Optional[int]:
    """Get an integer from the environment, None when unset or blank."""
    value = os.getenv(key, "").strip()
    return int(value) if value else None


@dataclass
class ProcrustesConfig:
    """Generalized Procrustes alignment settings."""
    tol: float = 1e-7  # on mean displacement
    max_iter: int = 100


@dataclass
class ModelConfig:
    """Shape model construction settings."""
    variance_fraction: float = 0.98


@dataclass
class FitConfig:
    """Model fitting settings."""
    tol: float = 1e-9  # on objective decrease
    max_iter: int = 50
    clamp_sigmas: float = 3.0


@dataclass
class OverlayConfig:
    """Mask overlay settings."""
    yaw_threshold: float = 0.25
    landmark_subset: str = "mask17"  # "mask17" or "ibug68"


@dataclass
class EvalConfig:
    """Evaluation harness settings."""
    workers: int = 1


@dataclass
class Config:
    """Main application configuration."""
    procrustes: ProcrustesConfig
    model: ModelConfig
    fit: FitConfig
    overlay: OverlayConfig
    eval: EvalConfig
    seed: Optional[int]
    debug: bool

    @classmethod
    def from_env(cls) -> "Config":
        """Load configuration from environment variables."""
        return cls(
            procrustes=ProcrustesConfig(
                tol=float(os.getenv("SHAPEFIT_GPA_TOL", "1e-7")),
                max_iter=int(os.getenv("SHAPEFIT_GPA_MAX_ITER", "100")),
            ),
            model=ModelConfig(
                variance_fraction=float(os.getenv("SHAPEFIT_VARIANCE", "0.98")),
            ),
            fit=FitConfig(
                tol=float(os.getenv("SHAPEFIT_FIT_TOL", "1e-9")),
                max_iter=int(os.getenv("SHAPEFIT_FIT_MAX_ITER", "50")),
                clamp_sigmas=float(os.getenv("SHAPEFIT_CLAMP_SIGMAS", "3.0")),
            ),
            overlay=OverlayConfig(
                yaw_threshold=float(os.getenv("SHAPEFIT_YAW_THRESHOLD", "0.25")),
                landmark_subset=os.getenv("SHAPEFIT_LANDMARK_SUBSET", "mask17"),
            ),
            eval=EvalConfig(
                workers=int(os.getenv("SHAPEFIT_WORKERS", "1")),
            ),
            seed=get_optional_int("SHAPEFIT_SEED"),
            debug=get_bool("DEBUG"),
        )

    def validate(self) -> list[str]:
        """Validate configuration and return list of errors."""
        errors = []

        if self.procrustes.tol <= 0:
            errors.append("SHAPEFIT_GPA_TOL must be positive")
        if self.procrustes.max_iter < 1:
            errors.append("SHAPEFIT_GPA_MAX_ITER must be at least 1")

        if not 0 < self.model.variance_fraction <= 1:
            errors.append("SHAPEFIT_VARIANCE must be in (0, 1]")

        if self.fit.tol <= 0:
            errors.append("SHAPEFIT_FIT_TOL must be positive")
        if self.fit.max_iter < 1:
            errors.append("SHAPEFIT_FIT_MAX_ITER must be at least 1")
        if self.fit.clamp_sigmas <= 0:
            errors.append("SHAPEFIT_CLAMP_SIGMAS must be positive")

        if not 0 <= self.overlay.yaw_threshold < 1:
            errors.append("SHAPEFIT_YAW_THRESHOLD must be in [0, 1)")
        if self.overlay.landmark_subset not in LANDMARK_SUBSETS:
            errors.append(f"SHAPEFIT_LANDMARK_SUBSET must be one of {', '.join(LANDMARK_SUBSETS)}")

        if self.eval.workers < 1:
            errors.append("SHAPEFIT_WORKERS must be at least 1")

        return errors
