"""Level extent and centerline report definitions."""

from __future__ import annotations

import csv
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from ..exceptions import ArgumentError, VolumeIOError
from ..levels import LevelExtent
from .tables import FieldMapping, format_flags, format_float, format_int

LEVEL_FIELDS: list[FieldMapping] = [
    ("subject", "subject", None),
    ("level", "level", format_int),
    ("rostral_slice", "rostral_slice", format_int),
    ("caudal_slice", "caudal_slice", format_int),
    ("pmj_rostral_mm", "pmj_rostral_mm", format_float),
    ("pmj_mid_mm", "pmj_mid_mm", format_float),
    ("pmj_caudal_mm", "pmj_caudal_mm", format_float),
    ("length_mm", "length_mm", format_float),
    ("flags", "flags", format_flags),
]

CENTERLINE_FIELDS: list[FieldMapping] = [
    ("slice_index", "slice_index", format_int),
    ("x_mm", "x_mm", format_float),
    ("y_mm", "y_mm", format_float),
    ("z_mm", "z_mm", format_float),
    ("cumulative_mm", "cumulative_mm", format_float),
]

STUDY_FIELDS: list[FieldMapping] = [
    ("spacing_mm", "spacing_mm", format_float),
    ("level", "level", format_int),
    ("reference_mm", "reference_mm", format_float),
    ("pmj_mid_mm", "pmj_mid_mm", format_float),
    ("abs_error_mm", "abs_error_mm", format_float),
]


def level_rows(extents: Iterable[LevelExtent], subject: str = "") -> list[dict[str, Any]]:
    rows = []
    for extent in sorted(extents, key=lambda e: e.level):
        row = extent.to_dict()
        row["subject"] = subject
        rows.append(row)
    return rows


def read_level_csv(path: str | Path, column: str = "pmj_mid_mm") -> dict[int, float]:
    """Read a levels CSV back into ``{level: distance}``; rows with a blank value are skipped."""

    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as exc:
        raise VolumeIOError(f"{path}: cannot read levels CSV ({exc})") from exc
    if rows and ("level" not in rows[0] or column not in rows[0]):
        raise ArgumentError(f"{path}: levels CSV needs 'level' and {column!r} columns")
    distances: dict[int, float] = {}
    for row in rows:
        value = (row.get(column) or "").strip()
        if not value:
            continue
        try:
            distances[int(row["level"])] = float(value)
        except ValueError as exc:
            raise ArgumentError(f"{path}: bad level row {row!r}") from exc
    return distances
