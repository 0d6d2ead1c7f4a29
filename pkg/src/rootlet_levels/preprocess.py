"""Deterministic volume conditioning: reorientation, normalisation, resampling, dilation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from nibabel.orientations import (
    apply_orientation,
    axcodes2ornt,
    inv_ornt_aff,
    io_orientation,
    ornt_transform,
)
from scipy import ndimage

from .config import DILATION_SHAPES
from .exceptions import ArgumentError, ContractError, DegenerateInputError
from .volume_io import Volume3D, orientation_of, require_axis_aligned, validate_binary

logger = logging.getLogger(__name__)

INTERPOLATIONS = ("linear", "nearest")
_AXIS_PAIRS = ({"L", "R"}, {"A", "P"}, {"S", "I"})
# NIfTI stores spacing as float32
SPACING_RTOL = 1e-6


def parse_orientation_code(code: str) -> tuple[str, str, str]:
    """Validate a code such as ``LPI``: one letter from each of L/R, A/P, S/I."""

    letters = tuple(str(code).strip().upper())
    if len(letters) != 3:
        raise ArgumentError(f"orientation code must have 3 letters, got {code!r}")
    used = [next((i for i, pair in enumerate(_AXIS_PAIRS) if c in pair), None) for c in letters]
    if None in used or sorted(used) != [0, 1, 2]:  # type: ignore[type-var]
        raise ArgumentError(f"invalid orientation code {code!r}")
    return letters  # type: ignore[return-value]


def reorient(vol: Volume3D, target: str) -> Volume3D:
    """Permute/flip axes so the voxel axes follow ``target``; physical positions are kept."""

    letters = parse_orientation_code(target)
    orientation_of(vol.affine)
    transform = ornt_transform(io_orientation(vol.affine), axcodes2ornt(letters))
    data = apply_orientation(np.asarray(vol.data), transform)
    affine = vol.affine @ inv_ornt_aff(transform, vol.dims)
    return Volume3D(data, affine, vol.label)


def zscore_normalize(vol: Volume3D) -> Volume3D:
    """(x - mean) / sd over all voxels, population sd (divide by N)."""

    data = np.asarray(vol.data, dtype=np.float64)
    if data.size < 2:
        raise DegenerateInputError("z-score needs at least 2 voxels")
    mean = data.mean()
    sd = data.std()
    if not np.isfinite(sd) or sd <= np.finfo(np.float64).eps * max(1.0, abs(mean)):
        raise DegenerateInputError("z-score of a constant volume is undefined (sd = 0)")
    return Volume3D((data - mean) / sd, vol.affine)


@dataclass(frozen=True, slots=True)
class ResampleSpec:
    """Target spacing (mm per axis) and interpolation kind."""

    spacing: tuple[float, float, float]
    interpolation: str = "linear"

    def __post_init__(self) -> None:
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ArgumentError(f"target spacing must be 3 positive values, got {self.spacing}")
        if self.interpolation not in INTERPOLATIONS:
            raise ArgumentError(
                f"interpolation must be one of {INTERPOLATIONS}, got {self.interpolation!r}"
            )
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def iso(cls, mm: float, interpolation: str = "linear") -> ResampleSpec:
        return cls((mm, mm, mm), interpolation)


def resample_iso(vol: Volume3D, spec: ResampleSpec) -> Volume3D:
    """Resample onto a grid with ``spec.spacing`` covering the same field of view.

    Output voxel centres are mapped through the affine into the input grid; samples
    outside the input clamp to the edge. Label maps require nearest interpolation.
    """

    if vol.label and spec.interpolation != "nearest":
        raise ContractError("label maps must be resampled with nearest interpolation")
    require_axis_aligned(vol.affine)

    old = np.asarray(vol.spacing)
    new = np.asarray(spec.spacing)
    if np.allclose(old, new, rtol=SPACING_RTOL, atol=0.0):
        return Volume3D(vol.data, vol.affine, vol.label)

    ratio = new / old
    extent = np.asarray(vol.dims) * old / new
    out_shape = tuple(int(n) for n in np.ceil(extent * (1.0 - SPACING_RTOL)))
    offset = 0.5 * ratio - 0.5
    if spec.interpolation == "linear":
        source = np.asarray(vol.data, dtype=np.float64)
        order = 1
    else:
        source = np.asarray(vol.data)
        order = 0
    data = ndimage.affine_transform(
        source, np.diag(ratio), offset=offset, output_shape=out_shape, order=order, mode="nearest"
    )
    voxel_map = np.eye(4)
    voxel_map[:3, :3] = np.diag(ratio)
    voxel_map[:3, 3] = offset
    logger.debug("Resampled %s -> %s (%s)", vol.dims, out_shape, spec.interpolation)
    return Volume3D(data, vol.affine @ voxel_map, vol.label)


@dataclass(frozen=True, slots=True)
class StructuringElement:
    """Binary footprint: ``ball`` (L2), ``cube`` (L-inf) or ``cross`` (L1), radius in voxels."""

    shape: str = "ball"
    radius: int = 3

    def __post_init__(self) -> None:
        if self.shape not in DILATION_SHAPES:
            raise ArgumentError(f"structuring element must be one of {DILATION_SHAPES}")
        if int(self.radius) != self.radius or self.radius < 1:
            raise ArgumentError(f"structuring element radius must be >= 1, got {self.radius}")


def structuring_element(elem: StructuringElement) -> np.ndarray:
    r = int(elem.radius)
    grid = np.mgrid[-r : r + 1, -r : r + 1, -r : r + 1]
    if elem.shape == "cube":
        return np.ones((2 * r + 1,) * 3, dtype=bool)
    if elem.shape == "cross":
        return np.abs(grid).sum(axis=0) <= r
    return (grid**2).sum(axis=0) <= r * r


def dilate(mask: Volume3D, elem: StructuringElement) -> Volume3D:
    """Binary dilation: a voxel is set iff the footprint centred on it hits the mask."""

    validate_binary(mask)
    dilated = ndimage.binary_dilation(
        np.asarray(mask.data, dtype=bool), structure=structuring_element(elem)
    )
    return mask.with_data(dilated.astype(np.uint8), label=True)
