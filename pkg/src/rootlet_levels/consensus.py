"""STAPLE label fusion: consensus masks and per-rater sensitivity/specificity."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from joblib import Parallel, delayed

from .config import DEFAULT_STAPLE_MAX_ITER, DEFAULT_STAPLE_TOL, resolve_threads
from .exceptions import ArgumentError, DegenerateInputError
from .volume_io import (
    ROOTLET_CLASSES,
    Volume3D,
    require_same_grid,
    validate_binary,
    validate_rootlet_labels,
)

logger = logging.getLogger(__name__)

INITIAL_PERFORMANCE = 0.9999
PROBABILITY_FLOOR = 1e-7


@dataclass(frozen=True, slots=True)
class RaterSet:
    """Two or more rootlet label maps on one grid, with rater identifiers."""

    volumes: tuple[Volume3D, ...]
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.volumes) < 2:
            raise ArgumentError(f"STAPLE needs at least 2 raters, got {len(self.volumes)}")
        if len(self.names) != len(self.volumes):
            raise ArgumentError("one name per rater is required")
        if len(set(self.names)) != len(self.names):
            raise ArgumentError(f"rater names must be unique: {list(self.names)}")
        require_same_grid(*self.volumes, what="raters")
        for name, volume in zip(self.names, self.volumes, strict=True):
            validate_rootlet_labels(volume, what=f"rater {name}")

    @classmethod
    def from_volumes(
        cls, volumes: Sequence[Volume3D], names: Sequence[str] | None = None
    ) -> RaterSet:
        if names is None:
            names = [f"rater_{index + 1}" for index in range(len(volumes))]
        return cls(tuple(volumes), tuple(str(n) for n in names))

    @property
    def reference(self) -> Volume3D:
        return self.volumes[0]

    def classes_present(self) -> tuple[int, ...]:
        present: set[int] = set()
        for volume in self.volumes:
            present.update(volume.labels_present())
        return tuple(c for c in ROOTLET_CLASSES if c in present)

    def indicators(self, label: int) -> np.ndarray:
        """Rater x voxel matrix of the class-``label`` indicator (float64)."""

        return np.stack(
            [np.asarray(v.data == label, dtype=np.float64).reshape(-1) for v in self.volumes]
        )


@dataclass(frozen=True, slots=True, eq=False)
class StapleResult:
    sensitivity: np.ndarray
    specificity: np.ndarray
    posterior: np.ndarray
    prior: float
    iterations: int
    converged: bool
    label: int | None = None

    def performance_rows(self, names: Sequence[str]) -> list[dict[str, Any]]:
        return [
            {
                "rater": str(name),
                "level": self.label,
                "sensitivity": float(p),
                "specificity": float(q),
                "iterations": self.iterations,
                "converged": self.converged,
            }
            for name, p, q in zip(names, self.sensitivity, self.specificity, strict=True)
        ]


@dataclass(frozen=True, slots=True, eq=False)
class MulticlassStaple:
    consensus: Volume3D
    results: dict[int, StapleResult]
    names: tuple[str, ...]
    flags: tuple[str, ...] = field(default=())

    def performance_rows(self) -> list[dict[str, Any]]:
        rows: list[dict[str, Any]] = []
        for label in sorted(self.results):
            rows.extend(self.results[label].performance_rows(self.names))
        return rows


def _clamp(values: np.ndarray) -> np.ndarray:
    return np.clip(values, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)


def _e_step(decisions: np.ndarray, prior: float, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    hit = decisions > 0.5
    fg = prior * np.prod(np.where(hit, p[:, None], 1.0 - p[:, None]), axis=0)
    bg = (1.0 - prior) * np.prod(np.where(hit, 1.0 - q[:, None], q[:, None]), axis=0)
    return fg / (fg + bg)


def _run_em(
    decisions: np.ndarray, tol: float, max_iter: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, int, bool]:
    """EM on a rater x voxel decision matrix with a fixed foreground prior."""

    prior = float(decisions.mean())
    raters = decisions.shape[0]
    p = np.full(raters, INITIAL_PERFORMANCE)
    q = np.full(raters, INITIAL_PERFORMANCE)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        weights = _e_step(decisions, prior, p, q)
        fg_mass = weights.sum()
        bg_mass = (1.0 - weights).sum()
        p_next = decisions @ weights / fg_mass if fg_mass > 0 else p
        q_next = (1.0 - decisions) @ (1.0 - weights) / bg_mass if bg_mass > 0 else q
        p_next = _clamp(p_next)
        q_next = _clamp(q_next)
        delta = max(np.abs(p_next - p).max(), np.abs(q_next - q).max())
        p, q = p_next, q_next
        logger.debug("STAPLE iteration %d: max delta %.3g", iterations, delta)
        if delta < tol:
            converged = True
            break
    # Posterior consistent with the reported performance parameters.
    weights = _e_step(decisions, prior, p, q)
    return weights, p, q, prior, iterations, converged


def _check_em_args(tol: float, max_iter: int) -> None:
    if not tol > 0:
        raise ArgumentError(f"tol must be positive, got {tol}")
    if int(max_iter) != max_iter or max_iter < 1:
        raise ArgumentError(f"max_iter must be >= 1, got {max_iter}")


def staple_binary(
    masks: Sequence[Volume3D],
    tol: float = DEFAULT_STAPLE_TOL,
    max_iter: int = DEFAULT_STAPLE_MAX_ITER,
    *,
    label: int | None = None,
) -> StapleResult:
    """Binary STAPLE over two or more masks on one grid."""

    if len(masks) < 2:
        raise ArgumentError(f"STAPLE needs at least 2 masks, got {len(masks)}")
    _check_em_args(tol, max_iter)
    require_same_grid(*masks, what="STAPLE masks")
    for index, mask in enumerate(masks):
        validate_binary(mask, what=f"mask {index + 1}")
    decisions = np.stack([np.asarray(m.data, dtype=np.float64).reshape(-1) for m in masks])
    return _staple_decisions(decisions, masks[0].dims, tol, max_iter, label)


def _staple_decisions(
    decisions: np.ndarray,
    dims: tuple[int, int, int],
    tol: float,
    max_iter: int,
    label: int | None,
) -> StapleResult:
    if not decisions.any():
        raise DegenerateInputError("all STAPLE masks are empty")
    weights, p, q, prior, iterations, converged = _run_em(decisions, tol, int(max_iter))
    what = "binary" if label is None else f"class {label}"
    if converged:
        logger.info("STAPLE %s converged after %d iterations", what, iterations)
    else:
        logger.warning("STAPLE %s stopped at max_iter=%d without converging", what, iterations)
    return StapleResult(
        sensitivity=p,
        specificity=q,
        posterior=weights.reshape(dims),
        prior=prior,
        iterations=iterations,
        converged=converged,
        label=label,
    )


def _class_staple(raters: RaterSet, label: int, tol: float, max_iter: int) -> StapleResult:
    return _staple_decisions(raters.indicators(label), raters.reference.dims, tol, max_iter, label)


def staple_multiclass(
    raters: RaterSet,
    tol: float = DEFAULT_STAPLE_TOL,
    max_iter: int = DEFAULT_STAPLE_MAX_ITER,
    *,
    threads: int | None = None,
) -> MulticlassStaple:
    """Per-class binary STAPLE; each voxel takes the class with the largest posterior >= 0.5.

    Ties go to the lower class number. Classes no rater drew are skipped.
    """

    _check_em_args(tol, max_iter)
    classes = raters.classes_present()
    flags = [f"level_{c}:absent" for c in ROOTLET_CLASSES if c not in classes]
    if not classes:
        raise DegenerateInputError(
            "no rootlet class is drawn by any rater", details={"flags": flags}
        )

    n_jobs = min(resolve_threads(threads), len(classes))
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_class_staple)(raters, label, tol, max_iter) for label in classes
    )
    by_class = dict(zip(classes, results, strict=True))
    for label, result in by_class.items():
        if not result.converged:
            flags.append(f"level_{label}:not_converged")

    posteriors = np.stack([by_class[c].posterior for c in classes])
    best = np.argmax(posteriors, axis=0)
    winning = np.take_along_axis(posteriors, best[None], axis=0)[0]
    labels = np.asarray(classes, dtype=np.uint8)[best]
    consensus = np.where(winning >= 0.5, labels, 0).astype(np.uint8)
    logger.info("STAPLE consensus over %d raters, classes %s", len(raters.volumes), classes)
    return MulticlassStaple(
        consensus=raters.reference.with_data(consensus, label=True),
        results=by_class,
        names=raters.names,
        flags=tuple(flags),
    )
