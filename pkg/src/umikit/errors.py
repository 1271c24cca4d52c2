"""Exception hierarchy.

Every domain error carries a short machine-readable ``code`` so the CLI can
emit structured error JSON without string matching.
"""

from __future__ import annotations


class UmiError(Exception):
    code = "umi-error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), "details": self.details}


class OutOfRangeError(UmiError, ValueError):
    """A request falls outside the data a stream covers (no extrapolation)."""

    code = "out-of-range"


class FrameMismatchError(UmiError, ValueError):
    code = "frame-mismatch"


class ClockSkewError(UmiError, ValueError):
    """A timestamp difference that must be positive was not."""

    code = "clock-skew"


class InsufficientOverlapError(UmiError, ValueError):
    code = "insufficient-overlap"


class LowConfidenceError(UmiError):
    code = "low-confidence"


class AmbiguityError(UmiError):
    code = "ambiguous"


class MeasurementInconsistencyError(UmiError, ValueError):
    code = "measurement-inconsistency"


class LatePlanError(UmiError):
    """Some commands of a dispatch plan would have to be sent in the past."""

    code = "late-plan"


class DegenerateAlignmentError(UmiError, ValueError):
    code = "degenerate-alignment"


class CalibrationError(UmiError, ValueError):
    code = "calibration-insufficient"


class PairingAmbiguityError(UmiError):
    code = "pairing-ambiguous"


class GeometryError(UmiError, ValueError):
    code = "bad-geometry"


class ConfigError(UmiError, ValueError):
    code = "bad-config"
