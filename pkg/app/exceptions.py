from typing import Any, Mapping, Optional, Sequence

from pydantic import ValidationError


class PdfNetError(Exception):
    """Base class for every error raised by the library."""


class ConfigurationError(PdfNetError):
    """Invalid experiment configuration, shape mismatch or unreadable artifact."""


class UnsupportedDerivativeError(PdfNetError):
    """A jet request exceeds two active coordinates or total order three."""


class CompileError(PdfNetError):
    """The residual compiler cannot handle a model coefficient."""


class TrainingDiagnosticError(PdfNetError):
    """Raised when a loss turns non-finite during training.

    Carries the collocation point where the residual first went bad and a
    free-form mapping of diagnostic values written to the diagnostic file.
    """

    def __init__(
        self,
        message: str,
        point: Optional[Sequence[float]] = None,
        details: Optional[Mapping[str, Any]] = None,
    ):
        super().__init__(message)
        self.point = None if point is None else [float(p) for p in point]
        self.details = dict(details or {})

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "point": self.point,
            "details": self.details,
        }


class NormalizationError(TrainingDiagnosticError):
    """The normalizer of e^{-v} is unusable (non-finite or clamped too often)."""

    def __init__(
        self,
        message: str,
        v_range: Optional[Sequence[float]] = None,
        clamped: int = 0,
        total: int = 0,
        point: Optional[Sequence[float]] = None,
    ):
        details = {
            "v_range": None if v_range is None else [float(v) for v in v_range],
            "clamped": int(clamped),
            "total": int(total),
        }
        super().__init__(message, point=point, details=details)
        self.v_range = details["v_range"]
        self.clamped = int(clamped)
        self.total = int(total)


class OracleError(PdfNetError):
    """Monte Carlo simulation failed (too many exploded paths)."""


class EstimatorError(PdfNetError):
    """An empirical estimator was asked for something it cannot deliver."""


class FieldMismatchError(PdfNetError):
    """Two fields cannot be compared, or a grid violates an operation's layout."""


def exit_code_for(exc: BaseException) -> int:
    """CLI exit code for an exception raised by a pipeline stage."""
    if isinstance(exc, TrainingDiagnosticError):
        return 3
    if isinstance(exc, (OracleError, EstimatorError)):
        return 4
    if isinstance(
        exc,
        (
            ConfigurationError,
            CompileError,
            UnsupportedDerivativeError,
            FieldMismatchError,
            ValidationError,
        ),
    ):
        return 2
    return 1
