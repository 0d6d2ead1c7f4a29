"""Evaluation arithmetic: Dice, coefficient of variation and level-distance MAE."""

from __future__ import annotations

import logging
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import variation

from .config import COV_CONVENTIONS
from .exceptions import ArgumentError, DegenerateInputError
from .volume_io import ROOTLET_CLASSES, Volume3D, require_same_grid, validate_binary

logger = logging.getLogger(__name__)

MEAN_EPSILON = 1e-9


def _dice_arrays(a: np.ndarray, b: np.ndarray) -> float | None:
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return None
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def dice(pred: Volume3D, truth: Volume3D, *, flags: list[str] | None = None) -> float:
    """2|A and B| / (|A| + |B|); two empty masks score 1.0 and add ``dice:both_empty``."""

    require_same_grid(pred, truth, what="prediction and truth")
    validate_binary(pred, what="prediction")
    validate_binary(truth, what="truth")
    value = _dice_arrays(np.asarray(pred.data, dtype=bool), np.asarray(truth.data, dtype=bool))
    if value is None:
        if flags is not None:
            flags.append("dice:both_empty")
        return 1.0
    return value


@dataclass(frozen=True, slots=True)
class MulticlassDice:
    per_class: dict[int, float]
    mean: float
    sd: float
    flags: tuple[str, ...] = field(default=())


def dice_multiclass(
    pred: Volume3D,
    truth: Volume3D,
    classes: Iterable[int] = ROOTLET_CLASSES,
) -> MulticlassDice:
    """Per-class Dice over classes present in ``truth``; mean and sample SD across them."""

    require_same_grid(pred, truth, what="prediction and truth")
    pred_labels = np.asarray(pred.data)
    truth_labels = np.asarray(truth.data)
    per_class: dict[int, float] = {}
    flags: list[str] = []
    for label in sorted(set(int(c) for c in classes)):
        truth_mask = truth_labels == label
        if not truth_mask.any():
            flags.append(f"level_{label}:absent_from_truth")
            continue
        value = _dice_arrays(pred_labels == label, truth_mask)
        per_class[label] = 0.0 if value is None else value
    if not per_class:
        raise DegenerateInputError("no requested class is present in the truth", details=flags)
    values = np.asarray(list(per_class.values()))
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    if values.size == 1:
        flags.append("dice:single_class")
    return MulticlassDice(per_class=per_class, mean=float(values.mean()), sd=sd, flags=tuple(flags))


def _ddof(convention: str) -> int:
    if convention not in COV_CONVENTIONS:
        raise ArgumentError(f"COV convention must be one of {COV_CONVENTIONS}, got {convention!r}")
    return 1 if convention == "sample" else 0


def cov(values: Sequence[float] | np.ndarray, convention: str = "sample") -> float:
    """Coefficient of variation in percent: 100 * sd / |mean|."""

    ddof = _ddof(convention)
    data = np.asarray(values, dtype=np.float64).reshape(-1)
    if data.size < 2:
        raise DegenerateInputError(f"COV needs at least 2 values, got {data.size}")
    if abs(float(data.mean())) < MEAN_EPSILON:
        raise DegenerateInputError("COV is undefined for a zero mean")
    return float(100.0 * abs(variation(data, ddof=ddof)))


def mae_levels(
    reference: Mapping[int, float],
    test: Mapping[int, float],
    *,
    flags: list[str] | None = None,
) -> float:
    """Mean |test - reference| over levels present in both maps."""

    shared = sorted(set(reference) & set(test))
    if flags is not None:
        flags.extend(f"level_{lvl}:missing_from_test" for lvl in sorted(set(reference) - set(test)))
        flags.extend(
            f"level_{lvl}:missing_from_reference" for lvl in sorted(set(test) - set(reference))
        )
    missing = sorted(set(reference) ^ set(test))
    if missing:
        logger.warning("Levels present on one side only: %s", missing)
    if not shared:
        raise DegenerateInputError("reference and test share no level")
    errors = [abs(float(test[lvl]) - float(reference[lvl])) for lvl in shared]
    return float(np.mean(errors))


def _mean_sd(values: Sequence[float]) -> dict[str, Any]:
    data = np.asarray(values, dtype=np.float64)
    return {
        "n": int(data.size),
        "mean": float(data.mean()) if data.size else None,
        "sd": float(data.std(ddof=1)) if data.size > 1 else None,
    }


def aggregate_dice(reports: Sequence[MulticlassDice]) -> dict[str, Any]:
    """Two labelled aggregations across images.

    ``pooled`` treats every (image, level) pair as one sample; ``per_level`` averages
    each level over images first and ``across_levels`` summarises those level means.
    """

    pooled = [value for report in reports for value in report.per_class.values()]
    by_level: dict[int, list[float]] = {}
    for report in reports:
        for level, value in report.per_class.items():
            by_level.setdefault(level, []).append(value)
    level_means = {level: float(np.mean(v)) for level, v in sorted(by_level.items())}
    return {
        "pooled": _mean_sd(pooled),
        "per_level": level_means,
        "across_levels": _mean_sd(list(level_means.values())),
    }


@dataclass(frozen=True, slots=True)
class CovTable:
    per_level: dict[int, float]
    mean: float | None
    sd: float | None
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_level": {str(k): v for k, v in self.per_level.items()},
            "mean": self.mean,
            "sd": self.sd,
            "flags": list(self.flags),
        }


def _cov_table(
    distances_by_group: Mapping[str, Mapping[int, float]], convention: str
) -> CovTable:
    levels = sorted({lvl for distances in distances_by_group.values() for lvl in distances})
    per_level: dict[int, float] = {}
    flags: list[str] = []
    for level in levels:
        values = [d[level] for d in distances_by_group.values() if level in d]
        if len(values) < 2:
            flags.append(f"level_{level}:too_few_values")
            continue
        try:
            per_level[level] = cov(values, convention)
        except DegenerateInputError:
            flags.append(f"level_{level}:zero_mean")
    summary = _mean_sd(list(per_level.values()))
    return CovTable(per_level, summary["mean"], summary["sd"], tuple(flags))


def inter_rater_cov(
    distances_by_rater: Mapping[str, Mapping[int, float]], convention: str = "sample"
) -> CovTable:
    """Per level COV of the PMJ-to-mid-level distance across raters for one image."""

    _ddof(convention)
    return _cov_table(distances_by_rater, convention)


def mean_cov_across_images(tables: Sequence[CovTable]) -> CovTable:
    """Average each level's COV over images; mean and SD across the level averages."""

    by_level: dict[int, list[float]] = {}
    for table in tables:
        for level, value in table.per_level.items():
            by_level.setdefault(level, []).append(value)
    per_level = {level: float(np.mean(v)) for level, v in sorted(by_level.items())}
    summary = _mean_sd(list(per_level.values()))
    return CovTable(per_level, summary["mean"], summary["sd"])


def variability_summary(
    distances_by_group: Mapping[str, Mapping[int, float]],
    convention: str = "sample",
    *,
    strata: Mapping[str, str] | None = None,
    exclude: Collection[str] = (),
) -> dict[str, Any]:
    """Inter-session or inter-site COV per level across groups.

    Groups listed in ``exclude`` are dropped first. With ``strata`` (group -> stratum,
    e.g. scanner vendor) the same table is also computed within each stratum.
    """

    _ddof(convention)
    kept = {g: d for g, d in distances_by_group.items() if g not in set(exclude)}
    overall = _cov_table(kept, convention)
    payload: dict[str, Any] = {
        "groups": sorted(kept),
        "excluded": sorted(set(exclude) & set(distances_by_group)),
        "overall": overall.to_dict(),
    }
    if strata:
        by_stratum: dict[str, dict[str, Mapping[int, float]]] = {}
        for group, distances in kept.items():
            if group in strata:
                by_stratum.setdefault(strata[group], {})[group] = distances
        payload["strata"] = {
            name: _cov_table(groups, convention).to_dict()
            for name, groups in sorted(by_stratum.items())
        }
    return payload


@dataclass(slots=True)
class MetricsReport:
    """Collected evaluation numbers for one metrics run."""

    dice: dict[int, float] = field(default_factory=dict)
    dice_mean: float | None = None
    dice_sd: float | None = None
    cov: dict[int, float] = field(default_factory=dict)
    mae: dict[float, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    aggregation: dict[str, Any] = field(default_factory=dict)

    def add_dice(self, result: MulticlassDice) -> None:
        self.dice = dict(result.per_class)
        self.dice_mean = result.mean
        self.dice_sd = result.sd
        self.flags.extend(result.flags)

    def add_dice_images(self, results: Sequence[MulticlassDice]) -> None:
        """Several images: per-level means in ``dice``, pooled mean and SD, both aggregations."""

        summary = aggregate_dice(results)
        if len(results) == 1:
            self.add_dice(results[0])
        else:
            self.dice = dict(summary["per_level"])
            self.dice_mean = summary["pooled"]["mean"]
            self.dice_sd = summary["pooled"]["sd"]
            for index, result in enumerate(results, start=1):
                self.flags.extend(f"image_{index}:{flag}" for flag in result.flags)
        self.aggregation["dice"] = summary

    def to_dict(self) -> dict[str, Any]:
        return {
            "dice": {str(k): v for k, v in sorted(self.dice.items())},
            "dice_mean": self.dice_mean,
            "dice_sd": self.dice_sd,
            "cov": {str(k): v for k, v in sorted(self.cov.items())},
            "mae": {f"{k:g}": v for k, v in sorted(self.mae.items())},
            "flags": list(self.flags),
            "aggregation": self.aggregation,
        }

    def rows(self) -> list[dict[str, Any]]:
        """Long-format CSV mirror: one row per (metric, key)."""

        rows: list[dict[str, Any]] = []
        for level, value in sorted(self.dice.items()):
            rows.append({"metric": "dice", "key": str(level), "value": value})
        if self.dice_mean is not None:
            rows.append({"metric": "dice_mean", "key": "", "value": self.dice_mean})
            rows.append({"metric": "dice_sd", "key": "", "value": self.dice_sd})
        for level, value in sorted(self.cov.items()):
            rows.append({"metric": "cov", "key": str(level), "value": value})
        for spacing, value in sorted(self.mae.items()):
            rows.append({"metric": "mae", "key": f"{spacing:g}", "value": value})
        return rows
