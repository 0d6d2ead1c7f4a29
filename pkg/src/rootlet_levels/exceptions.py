"""Custom exception hierarchy for rootlet-levels."""

from __future__ import annotations

from typing import Any

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE = 2


class RootletLevelsError(RuntimeError):
    """Base error for rootlet-levels failures."""

    default_exit_code = EXIT_ERROR

    def __init__(
        self,
        message: str,
        *,
        exit_code: int | None = None,
        details: Any | None = None,
    ) -> None:
        super().__init__(message)
        self.exit_code = self.default_exit_code if exit_code is None else exit_code
        self.details = details


class VolumeFormatError(RootletLevelsError):
    """Raised when a file is not a single-file NIfTI-1 volume."""


class UnsupportedDatatypeError(RootletLevelsError):
    """Raised when a NIfTI datatype code is outside the supported set."""


class VolumeIOError(RootletLevelsError):
    """Raised when volume data cannot be read or written."""


class GeometryError(RootletLevelsError):
    """Raised when an affine or centerline cannot support the requested geometry."""


class ArgumentError(RootletLevelsError):
    """Raised when a parameter value is invalid (orientation codes, radii, windows)."""


class ContractError(RootletLevelsError):
    """Raised when inputs break a shared contract, e.g. volumes on different grids."""


class RangeError(RootletLevelsError):
    """Raised when a slice index lies outside the volume."""


class DegenerateInputError(RootletLevelsError):
    """Raised when inputs are well-formed but carry no usable signal."""

    default_exit_code = EXIT_DEGENERATE


class PhantomSpecError(RootletLevelsError):
    """Raised when a phantom specification violates its invariants."""
