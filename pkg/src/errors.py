"""Exception types for facemask-asm.

Every error carries the process exit code the CLI reports for it:
1 usage, 2 parse/validation, 3 numerical failure.
"""

from typing import Optional


class ShapeFitError(Exception):
    """Base class for all library errors."""
    exit_code = 2


class UsageError(ShapeFitError):
    """Bad command-line usage or missing required option."""
    exit_code = 1


class ParseError(ShapeFitError):
    """A file could not be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, entry: Optional[int] = None):
        self.path = path
        self.entry = entry
        context = []
        if path:
            context.append(str(path))
        if entry is not None:
            context.append(f"entry {entry}")
        prefix = f"{': '.join(context)}: " if context else ""
        super().__init__(f"{prefix}{message}")


class ValidationError(ShapeFitError):
    """Parsed data violates a documented invariant."""


class InvalidShapeError(ValidationError):
    """Shape with non-finite or malformed coordinates."""


class ShapeArityError(ValidationError):
    """Point counts or vector lengths do not match."""


class CorpusTooSmallError(ValidationError):
    """Fewer shapes than a model needs."""


class RegistryIncompleteError(ValidationError):
    """Template registry lacks a required view."""


class DimensionMismatchError(ValidationError):
    """Two rasters compared with different dimensions."""


class ImageTooSmallError(ValidationError):
    """Raster smaller than the metric window."""


class DegenerateShapeError(ShapeFitError):
    """Shape collapses to a single point."""
    exit_code = 3


class WarpDegenerateError(ShapeFitError):
    """Every triangle of a warp target has zero area."""
    exit_code = 3


class NoFootprintError(ShapeFitError):
    """Rendered mask has no pixels to measure."""
    exit_code = 3
