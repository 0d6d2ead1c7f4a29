"""Configuration helpers for rootlet-levels runs."""

from __future__ import annotations

import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .exceptions import ArgumentError

THREADS_ENV = "ROOTLET_LEVELS_THREADS"

DILATION_SHAPES = ("ball", "cube", "cross")
DILATION_UNITS = ("vox", "mm")
COV_CONVENTIONS = ("sample", "population")
OUTPUT_FORMATS = ("csv", "json", "both")

DEFAULT_DILATION_RADIUS = 3
DEFAULT_SMOOTHING_WINDOW = 15
DEFAULT_STAPLE_TOL = 1e-6
DEFAULT_STAPLE_MAX_ITER = 100
DEFAULT_STUDY_SPACINGS = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6)


def resolve_threads(value: int | None = None) -> int:
    """Return the worker cap: explicit value, else $ROOTLET_LEVELS_THREADS, else 1."""

    if value is None:
        raw = os.getenv(THREADS_ENV)
        if raw is None or not raw.strip():
            return 1
        try:
            value = int(raw.strip())
        except ValueError as exc:
            raise ArgumentError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ArgumentError(f"thread count must be >= 1, got {value}")
    return value


@dataclass(slots=True)
class DilationConfig:
    """Structuring element request for the cord dilation."""

    radius: float = DEFAULT_DILATION_RADIUS
    unit: str = "vox"
    shape: str = "ball"

    def __post_init__(self) -> None:
        self.unit = self.unit.lower()
        self.shape = self.shape.lower()
        if self.unit not in DILATION_UNITS:
            raise ArgumentError(f"dilation unit must be one of {DILATION_UNITS}, got {self.unit!r}")
        if self.shape not in DILATION_SHAPES:
            raise ArgumentError(
                f"dilation shape must be one of {DILATION_SHAPES}, got {self.shape!r}"
            )
        if self.radius <= 0:
            raise ArgumentError(f"dilation radius must be positive, got {self.radius}")

    def resolve_radius(self, spacing: Sequence[float]) -> int:
        """Radius in voxels; mm radii use the finest spacing, rounded, min 1."""

        if self.unit == "vox":
            if float(self.radius) != int(self.radius):
                raise ArgumentError(f"voxel radius must be an integer, got {self.radius}")
            return int(self.radius)
        step = min(float(s) for s in spacing)
        return max(1, int(round(self.radius / step)))


@dataclass(slots=True)
class RunConfig:
    """Resolved inputs and knobs for one CLI invocation."""

    out_dir: Path
    rootlets: Path | None = None
    cord: Path | None = None
    pmj: Path | None = None
    raters: list[Path] = field(default_factory=list)
    dilation: DilationConfig = field(default_factory=DilationConfig)
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    cov_convention: str = "sample"
    output_format: str = "both"
    threads: int = 1
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ArgumentError(
                f"smoothing window must be a positive odd integer, got {self.smoothing_window}"
            )
        if self.cov_convention not in COV_CONVENTIONS:
            raise ArgumentError(
                f"COV convention must be one of {COV_CONVENTIONS}, got {self.cov_convention!r}"
            )
        if self.output_format not in OUTPUT_FORMATS:
            raise ArgumentError(
                f"format must be one of {OUTPUT_FORMATS}, got {self.output_format!r}"
            )

    @property
    def wants_csv(self) -> bool:
        return self.output_format in ("csv", "both")

    @property
    def wants_json(self) -> bool:
        return self.output_format in ("json", "both")

    def input_paths(self) -> list[Path]:
        paths = [p for p in (self.rootlets, self.cord, self.pmj) if p is not None]
        paths.extend(self.raters)
        return paths

    def resolved(self) -> dict[str, Any]:
        """JSON-ready view of the configuration, used in run manifests."""

        def _path(value: Path | None) -> str | None:
            return None if value is None else str(value)

        return {
            "rootlets": _path(self.rootlets),
            "cord": _path(self.cord),
            "pmj": _path(self.pmj),
            "raters": [str(p) for p in self.raters],
            "dilation": {
                "radius": self.dilation.radius,
                "unit": self.dilation.unit,
                "shape": self.dilation.shape,
            },
            "smoothing_window": self.smoothing_window,
            "cov_convention": self.cov_convention,
            "output_format": self.output_format,
            "out_dir": str(self.out_dir),
            "threads": self.threads,
            "extras": dict(sorted(self.extras.items())),
        }
