"""Spinal levels from rootlet entry zones: intersections, extents, projection and lengths."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config import DEFAULT_SMOOTHING_WINDOW, DilationConfig
from .geometry import Centerline, extract_centerline, pmj_distance
from .preprocess import StructuringElement, dilate
from .volume_io import (
    ROOTLET_CLASSES,
    PmjPoint,
    Volume3D,
    require_same_grid,
    validate_binary,
    validate_rootlet_labels,
)

logger = logging.getLogger(__name__)

FLAG_EMPTY = "empty"
FLAG_CLIPPED = "clipped_at_volume_edge"
FLAG_CLAMPED = "clamped_to_centerline"


@dataclass(frozen=True, slots=True)
class LevelExtent:
    """Rostro-caudal extent of one spinal level (2 = C2 ... 8 = C8).

    Slice indices are voxel indices on the third axis; distances are mm from the PMJ.
    Empty extents carry ``None`` for every slice and distance.
    """

    level: int
    rostral_slice: int | None = None
    caudal_slice: int | None = None
    mid_slice: int | None = None
    pmj_rostral_mm: float | None = None
    pmj_mid_mm: float | None = None
    pmj_caudal_mm: float | None = None
    length_mm: float | None = None
    flags: tuple[str, ...] = field(default=())

    @classmethod
    def empty(cls, level: int) -> LevelExtent:
        return cls(level=level, flags=(FLAG_EMPTY,))

    @property
    def is_empty(self) -> bool:
        return FLAG_EMPTY in self.flags

    @property
    def slice_span(self) -> tuple[int, int] | None:
        """(lowest, highest) slice index of the extent."""

        if self.rostral_slice is None or self.caudal_slice is None:
            return None
        low, high = sorted((self.rostral_slice, self.caudal_slice))
        return low, high

    def to_dict(self) -> dict[str, Any]:
        return {
            "level": self.level,
            "rostral_slice": self.rostral_slice,
            "caudal_slice": self.caudal_slice,
            "mid_slice": self.mid_slice,
            "pmj_rostral_mm": self.pmj_rostral_mm,
            "pmj_mid_mm": self.pmj_mid_mm,
            "pmj_caudal_mm": self.pmj_caudal_mm,
            "length_mm": self.length_mm,
            "flags": list(self.flags),
        }


@dataclass(frozen=True, slots=True, eq=False)
class SpinalLevelMap:
    """One-hot level channels over the cord mask plus the flattened label map."""

    channels: dict[int, Volume3D]
    flattened: Volume3D

    def channel(self, level: int) -> Volume3D:
        return self.channels[level]


@dataclass(frozen=True, slots=True, eq=False)
class LevelsResult:
    extents: tuple[LevelExtent, ...]
    level_map: SpinalLevelMap
    centerline: Centerline
    flags: tuple[str, ...] = field(default=())

    @property
    def all_empty(self) -> bool:
        return all(extent.is_empty for extent in self.extents)

    def extent(self, level: int) -> LevelExtent:
        for extent in self.extents:
            if extent.level == level:
                return extent
        raise KeyError(level)

    def mid_distances(self) -> dict[int, float]:
        return {
            e.level: float(e.pmj_mid_mm)
            for e in self.extents
            if not e.is_empty and e.pmj_mid_mm is not None
        }


def intersect_rootlets_cord(
    rootlets: Volume3D,
    cord: Volume3D,
    elem: StructuringElement | None = None,
) -> dict[int, Volume3D]:
    """Per class, the rootlet voxels that fall inside the dilated cord (entry zone)."""

    require_same_grid(rootlets, cord, what="rootlets and cord")
    validate_rootlet_labels(rootlets)
    validate_binary(cord, what="cord mask")
    elem = elem or StructuringElement()
    zone = np.asarray(dilate(cord, elem).data, dtype=bool)
    labels = np.asarray(rootlets.data)
    intersections: dict[int, Volume3D] = {}
    for level in ROOTLET_CLASSES:
        hit = (labels == level) & zone
        if not hit.any() and (labels == level).any():
            logger.warning("Level %d rootlets never reach the dilated cord", level)
        intersections[level] = cord.with_data(hit.astype(np.uint8), label=True)
    return intersections


def _extreme_slices(mask: np.ndarray, sign: int) -> tuple[int, int] | None:
    occupied = np.flatnonzero(mask.any(axis=(0, 1)))
    if occupied.size == 0:
        return None
    low, high = int(occupied[0]), int(occupied[-1])
    return (high, low) if sign > 0 else (low, high)


def _mid_slice(rostral: int, caudal: int, sign: int) -> int:
    middle = (rostral + caudal) / 2
    return math.ceil(middle) if sign > 0 else math.floor(middle)


def level_extents(
    intersections: Mapping[int, Volume3D],
    cl: Centerline,
    pmj: PmjPoint,
) -> list[LevelExtent]:
    """Rostral, middle and caudal slices of each level with their PMJ distances."""

    sign = cl.superior_sign
    extents: list[LevelExtent] = []
    for level in sorted(intersections):
        mask = np.asarray(intersections[level].data, dtype=bool)
        ends = _extreme_slices(mask, sign)
        if ends is None:
            extents.append(LevelExtent.empty(level))
            continue
        rostral, caudal = ends
        mid = _mid_slice(rostral, caudal, sign)
        distances = [pmj_distance(cl, pmj, k) for k in (rostral, mid, caudal)]
        flags: list[str] = []
        if min(rostral, caudal) == 0 or max(rostral, caudal) == mask.shape[2] - 1:
            flags.append(FLAG_CLIPPED)
        if any(d.clamped for d in distances):
            flags.append(FLAG_CLAMPED)
        d_rostral, d_mid, d_caudal = (d.mm for d in distances)
        extents.append(
            LevelExtent(
                level=level,
                rostral_slice=rostral,
                caudal_slice=caudal,
                mid_slice=mid,
                pmj_rostral_mm=d_rostral,
                pmj_mid_mm=d_mid,
                pmj_caudal_mm=d_caudal,
                length_mm=d_caudal - d_rostral,
                flags=tuple(flags),
            )
        )
    return extents


def project_levels(extents: Iterable[LevelExtent], cord: Volume3D) -> SpinalLevelMap:
    """Assign cord voxels to levels by slice; overlaps go to the lower class in the flat map."""

    validate_binary(cord, what="cord mask")
    mask = np.asarray(cord.data, dtype=bool)
    slice_index = np.arange(mask.shape[2])[None, None, :]
    spans = {e.level: e.slice_span for e in extents if not e.is_empty}

    channels: dict[int, Volume3D] = {}
    flattened = np.zeros(mask.shape, dtype=np.uint8)
    for level in sorted(ROOTLET_CLASSES, reverse=True):
        span = spans.get(level)
        if span is None:
            channel = np.zeros(mask.shape, dtype=bool)
        else:
            channel = mask & (slice_index >= span[0]) & (slice_index <= span[1])
        flattened[channel] = level
        channels[level] = cord.with_data(channel.astype(np.uint8), label=True)
    return SpinalLevelMap(
        channels=dict(sorted(channels.items())),
        flattened=cord.with_data(flattened, label=True),
    )


def level_lengths(extents: Iterable[LevelExtent]) -> dict[int, float]:
    """Caudal minus rostral PMJ distance per non-empty level."""

    return {
        e.level: float(e.pmj_caudal_mm - e.pmj_rostral_mm)
        for e in extents
        if not e.is_empty and e.pmj_caudal_mm is not None and e.pmj_rostral_mm is not None
    }


def _structuring_element(dilation: DilationConfig, cord: Volume3D) -> StructuringElement:
    return StructuringElement(dilation.shape, dilation.resolve_radius(cord.spacing))


def run_levels(
    rootlets: Volume3D,
    cord: Volume3D,
    pmj: PmjPoint,
    *,
    dilation: DilationConfig | None = None,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
) -> LevelsResult:
    """Intersect, extract the centerline, measure extents and project them onto the cord."""

    dilation = dilation or DilationConfig()
    elem = _structuring_element(dilation, cord)
    intersections = intersect_rootlets_cord(rootlets, cord, elem)
    centerline = extract_centerline(cord, smoothing_window)
    extents = level_extents(intersections, centerline, pmj)
    level_map = project_levels(extents, cord)

    flags: list[str] = list(centerline.flags) + list(pmj.flags)
    if not pmj.within(cord):
        logger.warning("PMJ %s lies outside the image volume", pmj.xyz_mm)
        flags.append("pmj:outside_volume")
    for extent in extents:
        for flag in extent.flags:
            flags.append(f"level_{extent.level}:{flag}")
    if all(e.is_empty for e in extents):
        logger.warning("No rootlet class intersects the dilated cord")
        flags.append("levels:all_empty")
    else:
        empty = [e.level for e in extents if e.is_empty]
        if empty:
            logger.warning("Levels without entry zone: %s", empty)
    logger.info(
        "Levels measured: %s", [e.level for e in extents if not e.is_empty]
    )
    return LevelsResult(
        extents=tuple(extents),
        level_map=level_map,
        centerline=centerline,
        flags=tuple(flags),
    )


def summarize_lengths(results: Sequence[LevelsResult]) -> dict[int, dict[str, float | int | None]]:
    """Per level, mean and sample SD of the level length across several images."""

    collected: dict[int, list[float]] = {}
    for result in results:
        for level, length in level_lengths(result.extents).items():
            collected.setdefault(level, []).append(length)
    summary: dict[int, dict[str, float | int | None]] = {}
    for level in sorted(collected):
        values = np.asarray(collected[level], dtype=np.float64)
        summary[level] = {
            "n": int(values.size),
            "mean_mm": float(values.mean()),
            "sd_mm": float(values.std(ddof=1)) if values.size > 1 else None,
        }
    return summary
