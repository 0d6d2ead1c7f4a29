"""Cord centerline extraction and curvature-aware distances along it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from nibabel.affines import apply_affine
from scipy import ndimage

from .config import DEFAULT_SMOOTHING_WINDOW
from .exceptions import ArgumentError, DegenerateInputError, GeometryError, RangeError
from .volume_io import PmjPoint, Volume3D, orientation_of, validate_binary

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True, eq=False)
class Centerline:
    """One smoothed point per slice between the first and last cord slice.

    ``arc_mm[n]`` is the cumulative polyline length from the first point. Slices are
    ascending voxel indices along the third axis.
    """

    slices: np.ndarray
    points_mm: np.ndarray
    arc_mm: np.ndarray
    window: int
    superior_sign: int
    n_slices: int
    flags: tuple[str, ...] = field(default=())

    @property
    def length_mm(self) -> float:
        return float(self.arc_mm[-1])

    @property
    def first_slice(self) -> int:
        return int(self.slices[0])

    @property
    def last_slice(self) -> int:
        return int(self.slices[-1])

    def resolve_slice(self, index: int) -> tuple[int, bool]:
        """Row of the centerline for slice ``index`` and whether it was clamped to an end."""

        index = int(index)
        if index < 0 or index >= self.n_slices:
            raise RangeError(f"slice {index} is outside the volume (0..{self.n_slices - 1})")
        if index < self.first_slice:
            return 0, True
        if index > self.last_slice:
            return len(self.slices) - 1, True
        return index - self.first_slice, False

    def point_at(self, index: int) -> np.ndarray:
        row, _ = self.resolve_slice(index)
        return self.points_mm[row].copy()

    def nearest_row(self, xyz_mm: np.ndarray) -> int:
        offsets = np.linalg.norm(self.points_mm - np.asarray(xyz_mm, dtype=np.float64), axis=1)
        return int(np.argmin(offsets))

    def to_rows(self) -> list[dict[str, Any]]:
        return [
            {
                "slice_index": int(k),
                "x_mm": float(p[0]),
                "y_mm": float(p[1]),
                "z_mm": float(p[2]),
                "cumulative_mm": float(s),
            }
            for k, p, s in zip(self.slices, self.points_mm, self.arc_mm, strict=True)
        ]


@dataclass(frozen=True, slots=True)
class CenterlineDistance:
    mm: float
    clamped: bool = False

    def __float__(self) -> float:
        return self.mm


def superior_sign(affine: np.ndarray) -> int:
    """+1 when the third voxel axis points superior, -1 when inferior."""

    code = orientation_of(affine)
    if code[2] not in "SI":
        raise GeometryError(
            f"the slice axis must run superior-inferior, got orientation {code}; reorient first"
        )
    return 1 if code[2] == "S" else -1


def _moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; windows shrink symmetrically near the ends."""

    if window == 1:
        return values.copy()
    half = window // 2
    last = len(values) - 1
    smoothed = np.empty_like(values)
    for n in range(len(values)):
        reach = min(half, n, last - n)
        smoothed[n] = values[n - reach : n + reach + 1].mean()
    return smoothed


def extract_centerline(cord: Volume3D, window: int = DEFAULT_SMOOTHING_WINDOW) -> Centerline:
    """Per-slice cord centroids, gaps interpolated, smoothed in-plane, mapped to mm."""

    if int(window) != window or window < 1 or window % 2 == 0:
        raise ArgumentError(f"smoothing window must be a positive odd integer, got {window}")
    validate_binary(cord, what="cord mask")
    sign = superior_sign(cord.affine)

    mask = np.asarray(cord.data, dtype=bool)
    counts = mask.sum(axis=(0, 1))
    covered = np.flatnonzero(counts)
    if covered.size == 0:
        raise DegenerateInputError("cord mask is empty")
    if covered.size < 2:
        raise GeometryError("cord mask covers fewer than 2 slices; no centerline")

    slice_labels = np.where(mask, np.arange(1, mask.shape[2] + 1)[None, None, :], 0)
    centroids = np.asarray(
        ndimage.center_of_mass(mask.astype(np.float64), labels=slice_labels, index=covered + 1),
        dtype=np.float64,
    )

    slices = np.arange(covered[0], covered[-1] + 1)
    gaps = slices.size - covered.size
    flags: tuple[str, ...] = ()
    if gaps:
        logger.warning("Cord mask has %d empty interior slices; interpolating", gaps)
        flags = ("centerline:gaps_interpolated",)
    ci = np.interp(slices, covered, centroids[:, 0])
    cj = np.interp(slices, covered, centroids[:, 1])

    voxels = np.column_stack(
        [_moving_average(ci, int(window)), _moving_average(cj, int(window)), slices]
    ).astype(np.float64)
    points = apply_affine(cord.affine, voxels)
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    logger.info(
        "Centerline over slices %d..%d, length %.3f mm", slices[0], slices[-1], arc[-1]
    )
    return Centerline(
        slices=slices,
        points_mm=points,
        arc_mm=arc,
        window=int(window),
        superior_sign=sign,
        n_slices=cord.dims[2],
        flags=flags,
    )


def arc_length_between(cl: Centerline, slice_a: int, slice_b: int) -> CenterlineDistance:
    row_a, clamped_a = cl.resolve_slice(slice_a)
    row_b, clamped_b = cl.resolve_slice(slice_b)
    return CenterlineDistance(
        float(abs(cl.arc_mm[row_b] - cl.arc_mm[row_a])), clamped_a or clamped_b
    )


def pmj_distance(cl: Centerline, pmj: PmjPoint, slice_index: int) -> CenterlineDistance:
    """Arc length from the PMJ's nearest centerline point to the slice, plus the PMJ offset."""

    row, clamped = cl.resolve_slice(slice_index)
    anchor = cl.nearest_row(pmj.as_array())
    offset = float(np.linalg.norm(pmj.as_array() - cl.points_mm[anchor]))
    return CenterlineDistance(float(abs(cl.arc_mm[row] - cl.arc_mm[anchor])) + offset, clamped)
