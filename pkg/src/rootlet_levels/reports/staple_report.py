"""Rater performance report for STAPLE runs."""

from __future__ import annotations

from typing import Any

from ..consensus import MulticlassStaple
from .tables import FieldMapping, format_float, format_int

PERFORMANCE_FIELDS: list[FieldMapping] = [
    ("rater", "rater", None),
    ("level", "level", format_int),
    ("sensitivity", "sensitivity", format_float),
    ("specificity", "specificity", format_float),
    ("iterations", "iterations", format_int),
    ("converged", "converged", None),
]


def staple_payload(fusion: MulticlassStaple) -> dict[str, Any]:
    return {
        "raters": list(fusion.names),
        "classes": sorted(fusion.results),
        "performance": fusion.performance_rows(),
        "priors": {str(c): r.prior for c, r in sorted(fusion.results.items())},
        "flags": list(fusion.flags),
    }
