"""Field-mapping tables and byte-stable CSV/JSON writers."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from ..exceptions import VolumeIOError

FieldTransform = Callable[[Any], Any]
FieldMapping = tuple[str, str, FieldTransform | None]

FLOAT_PRECISION = 6


def format_float(value: Any) -> str:
    if value is None:
        return ""
    number = float(value)
    if not math.isfinite(number):
        return ""
    return f"{number:.{FLOAT_PRECISION}f}"


def format_int(value: Any) -> str:
    return "" if value is None else str(int(value))


def format_flags(value: Any) -> str:
    if not value:
        return ""
    return ";".join(str(v) for v in value)


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return format_float(value)
    if isinstance(value, list | tuple):
        return format_flags(value)
    return str(value)


def extract_fields(row: Mapping[str, Any], mappings: Sequence[FieldMapping]) -> dict[str, str]:
    result: dict[str, str] = {}
    for source_field, target_field, transform in mappings:
        value = row.get(source_field)
        result[target_field] = (transform or format_cell)(value)
    return result


def csv_text(rows: Iterable[Mapping[str, Any]], mappings: Sequence[FieldMapping]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([target for _, target, _ in mappings])
    for row in rows:
        fields = extract_fields(row, mappings)
        writer.writerow([fields[target] for _, target, _ in mappings])
    return buffer.getvalue()


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        number = float(value)
        return number if math.isfinite(number) else None
    if isinstance(value, Path):
        return str(value)
    return value


def json_text(payload: Any) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise VolumeIOError(f"{path}: cannot write report ({exc})") from exc
    return path


def write_csv(
    path: Path, rows: Iterable[Mapping[str, Any]], mappings: Sequence[FieldMapping]
) -> Path:
    return write_text(path, csv_text(rows, mappings))


def write_json(path: Path, payload: Any) -> Path:
    return write_text(path, json_text(payload))
