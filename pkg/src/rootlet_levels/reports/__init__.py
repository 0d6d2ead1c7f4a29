"""Fixed-shape report helpers built on top of pipeline results."""

from .facade import ReportWriter
from .levels_report import (
    CENTERLINE_FIELDS,
    LEVEL_FIELDS,
    STUDY_FIELDS,
    level_rows,
    read_level_csv,
)
from .manifest import MANIFEST_NAME, build_manifest, sha256_file
from .metrics_report import METRIC_FIELDS
from .staple_report import PERFORMANCE_FIELDS, staple_payload
from .tables import csv_text, json_text

__all__ = [
    "ReportWriter",
    "CENTERLINE_FIELDS",
    "LEVEL_FIELDS",
    "METRIC_FIELDS",
    "MANIFEST_NAME",
    "PERFORMANCE_FIELDS",
    "STUDY_FIELDS",
    "build_manifest",
    "csv_text",
    "json_text",
    "level_rows",
    "read_level_csv",
    "sha256_file",
    "staple_payload",
]
