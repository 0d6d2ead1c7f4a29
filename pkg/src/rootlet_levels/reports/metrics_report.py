"""Metrics report definitions."""

from __future__ import annotations

from .tables import FieldMapping, format_float

METRIC_FIELDS: list[FieldMapping] = [
    ("metric", "metric", None),
    ("key", "key", None),
    ("value", "value", format_float),
]
