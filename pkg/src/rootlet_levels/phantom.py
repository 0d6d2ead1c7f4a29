"""Synthetic cervical phantoms with known levels, and the resolution study built on them."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad

from .config import (
    DEFAULT_DILATION_RADIUS,
    DEFAULT_SMOOTHING_WINDOW,
    DilationConfig,
    resolve_threads,
)
from .exceptions import DegenerateInputError, PhantomSpecError
from .levels import LevelExtent, LevelsResult, project_levels, run_levels
from .metrics import mae_levels
from .preprocess import ResampleSpec, resample_iso
from .volume_io import ROOTLET_CLASSES, PmjPoint, Volume3D, write_nifti

logger = logging.getLogger(__name__)

CURVE_MODES = ("straight", "bowed", "helical")
RNG_ALGORITHM = "numpy.random.PCG64"
ROOTLET_AZIMUTH_DEG = 35.0
MIN_LEVEL_GAP = 4  # rostral(c+1) <= caudal(c) - 4 leaves 3 empty slices

BACKGROUND_INTENSITY = 100.0
CANAL_INTENSITY = 600.0
CORD_INTENSITY = 300.0
ROOTLET_INTENSITY = 200.0


@dataclass(frozen=True, slots=True)
class RootletSpec:
    """Truth for one level: entry-zone slice span, obliquity and strand size."""

    level: int
    rostral_slice: int
    caudal_slice: int
    angulation_deg: float = 0.0
    radius_mm: float = 0.8
    length_mm: float = 8.0

    def __post_init__(self) -> None:
        if self.level not in ROOTLET_CLASSES:
            raise PhantomSpecError(f"rootlet level must be within 2..8, got {self.level}")
        if self.rostral_slice < self.caudal_slice:
            raise PhantomSpecError(
                f"level {self.level}: rostral slice {self.rostral_slice} is below caudal "
                f"slice {self.caudal_slice}"
            )
        if not 0.0 <= self.angulation_deg < 90.0:
            raise PhantomSpecError(f"level {self.level}: angulation must be in [0, 90)")
        if self.radius_mm <= 0 or self.length_mm <= 0:
            raise PhantomSpecError(f"level {self.level}: radius and length must be positive")


def _stack_levels(
    top_rostral: int,
    heights: Sequence[int],
    gaps: Sequence[int],
    angles: Sequence[float],
    radius_mm: float,
    length_mm: float,
) -> tuple[RootletSpec, ...]:
    """Lay levels C2..C8 downward from ``top_rostral``; ``gaps`` separate consecutive spans."""

    rootlets: list[RootletSpec] = []
    rostral = top_rostral
    for index, level in enumerate(ROOTLET_CLASSES):
        caudal = rostral - int(heights[index]) + 1
        rootlets.append(
            RootletSpec(level, rostral, caudal, float(angles[index]), radius_mm, length_mm)
        )
        if index < len(gaps):
            rostral = caudal - int(gaps[index])
    return tuple(rootlets)


@dataclass(frozen=True, slots=True)
class PhantomSpec:
    """Geometry of a synthetic RAS volume: slice index increases superiorly.

    The cord mask ends ``cord_end_margin`` slices below the PMJ slice. Rootlets leave the
    dorsal cord surface radially for ``entry_mm`` before bending caudally by their
    angulation, so the entry zone spans exactly the truth slices.
    """

    dims: tuple[int, int, int] = (64, 64, 160)
    spacing: tuple[float, float, float] = (0.8, 0.8, 0.8)
    cord_radius_mm: float = 3.5
    canal_radius_mm: float = 6.0
    curve: str = "straight"
    amplitude_mm: float = 0.0
    helix_radius_mm: float = 0.0
    pitch_mm: float = 40.0
    rootlets: tuple[RootletSpec, ...] = ()
    pmj_slice: int = 150
    cord_end_margin: int = 4
    entry_mm: float | None = None
    noise_sd: float = 0.0
    seed: int = 0
    allow_overlap: bool = False

    def __post_init__(self) -> None:
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or min(dims) < 8:
            raise PhantomSpecError(f"phantom dims must be three values >= 8, got {self.dims}")
        if len(spacing) != 3 or min(spacing) <= 0:
            raise PhantomSpecError(f"phantom spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "rootlets", tuple(sorted(self.rootlets, key=lambda r: r.level)))
        if self.curve not in CURVE_MODES:
            raise PhantomSpecError(f"curve must be one of {CURVE_MODES}, got {self.curve!r}")
        if self.curve == "helical" and self.pitch_mm <= 0:
            raise PhantomSpecError("helical pitch must be positive")
        if self.cord_radius_mm <= 0 or self.canal_radius_mm <= self.cord_radius_mm:
            raise PhantomSpecError("need 0 < cord radius < canal radius")
        if self.noise_sd < 0:
            raise PhantomSpecError("noise sd must be >= 0")
        if not 0 <= self.pmj_slice < dims[2]:
            raise PhantomSpecError(f"PMJ slice {self.pmj_slice} is outside 0..{dims[2] - 1}")
        if self.cord_end_margin < 0 or self.cord_top < 1:
            raise PhantomSpecError("cord must cover at least 2 slices below the PMJ")
        self._check_levels()
        self._check_fit()

    def _check_levels(self) -> None:
        levels = [r.level for r in self.rootlets]
        if len(set(levels)) != len(levels):
            raise PhantomSpecError(f"duplicate rootlet levels: {levels}")
        for rootlet in self.rootlets:
            if rootlet.caudal_slice < 0 or rootlet.rostral_slice > self.cord_top:
                raise PhantomSpecError(
                    f"level {rootlet.level} span {rootlet.caudal_slice}..{rootlet.rostral_slice} "
                    f"leaves the cord (0..{self.cord_top})"
                )
        if self.allow_overlap:
            return
        for upper, lower in zip(self.rootlets, self.rootlets[1:], strict=False):
            if lower.rostral_slice > upper.caudal_slice - MIN_LEVEL_GAP:
                raise PhantomSpecError(
                    f"levels {upper.level} and {lower.level} are closer than "
                    f"{MIN_LEVEL_GAP - 1} empty slices"
                )
            if lower.angulation_deg < upper.angulation_deg:
                raise PhantomSpecError(
                    f"level {lower.level} is less oblique than level {upper.level}"
                )

    def _check_fit(self) -> None:
        offset = {"straight": 0.0, "bowed": abs(self.amplitude_mm)}.get(
            self.curve, abs(self.helix_radius_mm)
        )
        reach = max(
            [self.canal_radius_mm]
            + [self.cord_radius_mm + self.entry + r.length_mm + r.radius_mm for r in self.rootlets]
        )
        for axis in (0, 1):
            half = (self.dims[axis] - 1) / 2 * self.spacing[axis]
            if reach + offset > half - self.spacing[axis]:
                raise PhantomSpecError(
                    f"phantom structures reach {reach + offset:.2f} mm but axis {axis} "
                    f"only allows {half - self.spacing[axis]:.2f} mm"
                )

    @property
    def cord_top(self) -> int:
        return self.pmj_slice - self.cord_end_margin

    @property
    def entry(self) -> float:
        if self.entry_mm is not None:
            return float(self.entry_mm)
        return (DEFAULT_DILATION_RADIUS + 1.5) * max(self.spacing)

    @property
    def affine(self) -> np.ndarray:
        return np.diag([*self.spacing, 1.0])

    def curve_offsets(self, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """In-plane displacement (mm) of the cord axis from the volume centre at slice ``k``."""

        k = np.asarray(k, dtype=np.float64)
        if self.curve == "bowed":
            return self.amplitude_mm * np.sin(np.pi * k / self.cord_top), np.zeros_like(k)
        if self.curve == "helical":
            phase = 2.0 * np.pi * k * self.spacing[2] / self.pitch_mm
            return self.helix_radius_mm * np.cos(phase), self.helix_radius_mm * np.sin(phase)
        return np.zeros_like(k), np.zeros_like(k)

    def _speed(self, k: float) -> float:
        sz = self.spacing[2]
        if self.curve == "bowed":
            dx = self.amplitude_mm * np.pi / self.cord_top * math.cos(np.pi * k / self.cord_top)
            return math.sqrt(dx * dx + sz * sz)
        if self.curve == "helical":
            rate = 2.0 * np.pi * sz / self.pitch_mm
            return math.sqrt((self.helix_radius_mm * rate) ** 2 + sz * sz)
        return sz

    def arc_mm(self, k_from: float, k_to: float) -> float:
        """Analytic length of the cord axis between two (continuous) slice positions."""

        low, high = sorted((float(k_from), float(k_to)))
        if low == high:
            return 0.0
        value, _ = quad(self._speed, low, high)
        return float(value)

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["dims"] = list(self.dims)
        payload["spacing"] = list(self.spacing)
        payload["entry_mm"] = self.entry
        payload["rootlets"] = [asdict(r) for r in self.rootlets]
        return payload

    @classmethod
    def default(
        cls,
        *,
        spacing: float = 0.8,
        curve: str = "straight",
        amplitude_mm: float = 0.0,
        helix_radius_mm: float = 0.0,
        angulation_max_deg: float = 45.0,
        rootlet_radius_mm: float | None = None,
        noise_sd: float = 0.0,
        seed: int = 0,
    ) -> PhantomSpec:
        """Seven-level C2..C8 phantom; angulation grows linearly from 0 to the maximum."""

        angles = np.linspace(0.0, angulation_max_deg, len(ROOTLET_CLASSES))
        rootlets = _stack_levels(
            top_rostral=145,
            heights=(12, 14, 14, 14, 14, 14, 14),
            gaps=(5,) * 6,
            angles=angles,
            radius_mm=rootlet_radius_mm if rootlet_radius_mm is not None else spacing,
            length_mm=8.0,
        )
        return cls(
            dims=(64, 64, 160),
            spacing=(spacing, spacing, spacing),
            curve=curve,
            amplitude_mm=amplitude_mm,
            helix_radius_mm=helix_radius_mm,
            rootlets=rootlets,
            pmj_slice=150,
            cord_end_margin=4,
            noise_sd=noise_sd,
            seed=seed,
        )

    @classmethod
    def randomized(cls, rng: np.random.Generator, mode: str = "straight") -> PhantomSpec:
        """Random but valid straight or bowed phantom for recovery tests."""

        if mode not in ("straight", "bowed"):
            raise PhantomSpecError(f"randomized phantoms are straight or bowed, got {mode!r}")
        s = float(rng.choice([0.6, 0.8, 1.0]))
        cord_radius = float(rng.uniform(3.0, 4.0))
        radius = s * float(rng.uniform(0.75, 1.0))
        length = float(rng.uniform(5.0, 8.0))
        amplitude = float(rng.uniform(1.0, 3.0)) if mode == "bowed" else 0.0
        heights = rng.integers(4, 13, size=len(ROOTLET_CLASSES))
        gaps = rng.integers(MIN_LEVEL_GAP, MIN_LEVEL_GAP + 3, size=len(ROOTLET_CLASSES) - 1)

        bottom = math.ceil(length / s) + 3
        top_rostral = bottom + int(heights.sum()) + int(gaps.sum()) - 1
        cord_top = top_rostral + 1 + int(rng.integers(0, 3))
        margin = int(rng.integers(2, 6))
        pmj_slice = cord_top + margin

        reach = cord_radius + (DEFAULT_DILATION_RADIUS + 1.5) * s + length + radius + amplitude
        n_inplane = math.ceil(2.0 * (reach + 2.0 * s) / s) + 1
        rootlets = _stack_levels(
            top_rostral,
            heights,
            gaps,
            np.linspace(0.0, 45.0, len(ROOTLET_CLASSES)),
            radius,
            length,
        )
        return cls(
            dims=(n_inplane, n_inplane, pmj_slice + 5),
            spacing=(s, s, s),
            cord_radius_mm=cord_radius,
            canal_radius_mm=cord_radius + 1.0,
            curve=mode,
            amplitude_mm=amplitude,
            rootlets=rootlets,
            pmj_slice=pmj_slice,
            cord_end_margin=margin,
            seed=int(rng.integers(0, 2**31 - 1)),
        )


@dataclass(frozen=True, slots=True, eq=False)
class Phantom:
    spec: PhantomSpec
    image: Volume3D
    cord: Volume3D
    rootlets: Volume3D
    pmj: PmjPoint
    truth: tuple[LevelExtent, ...]

    def truth_mid_distances(self) -> dict[int, float]:
        return {e.level: float(e.pmj_mid_mm) for e in self.truth if e.pmj_mid_mm is not None}


def _rootlet_mask(
    spec: PhantomSpec,
    rootlet: RootletSpec,
    rx: np.ndarray,
    ry: np.ndarray,
    slices: np.ndarray,
) -> np.ndarray:
    start = spec.cord_radius_mm - min(spec.spacing[:2])
    entry_end = spec.cord_radius_mm + spec.entry
    end = entry_end + rootlet.length_mm
    slope = math.tan(math.radians(rootlet.angulation_deg)) / spec.spacing[2]
    mask = np.zeros(np.broadcast_shapes(rx.shape, ry.shape, slices.shape), dtype=bool)
    for side in (-1.0, 1.0):
        azimuth = math.radians(ROOTLET_AZIMUTH_DEG) * side
        # posterior is -y on a RAS grid
        ux, uy = math.sin(azimuth), -math.cos(azimuth)
        along = rx * ux + ry * uy
        across = np.abs(rx * uy - ry * ux)
        shifted = slices + np.clip(along - entry_end, 0.0, None) * slope
        mask |= (
            (across <= rootlet.radius_mm)
            & (along >= start)
            & (along <= end)
            & (shifted >= rootlet.caudal_slice - 0.5)
            & (shifted < rootlet.rostral_slice + 0.5)
        )
    return mask


def _truth_extent(spec: PhantomSpec, rootlet: RootletSpec) -> LevelExtent:
    rostral, caudal = rootlet.rostral_slice, rootlet.caudal_slice
    mid = math.ceil((rostral + caudal) / 2)
    d_rostral, d_mid, d_caudal = (spec.arc_mm(k, spec.pmj_slice) for k in (rostral, mid, caudal))
    return LevelExtent(
        level=rootlet.level,
        rostral_slice=rostral,
        caudal_slice=caudal,
        mid_slice=mid,
        pmj_rostral_mm=d_rostral,
        pmj_mid_mm=d_mid,
        pmj_caudal_mm=d_caudal,
        length_mm=d_caudal - d_rostral,
    )


def generate_phantom(spec: PhantomSpec) -> Phantom:
    """Build image, cord, rootlets, PMJ and truth extents from ``spec``; seeded and pure."""

    nx, ny, nz = spec.dims
    sx, sy, _ = spec.spacing
    k = np.arange(nz, dtype=np.float64)
    dx, dy = spec.curve_offsets(k)
    centre_x = (nx - 1) / 2 * sx + dx
    centre_y = (ny - 1) / 2 * sy + dy

    rx = (np.arange(nx) * sx)[:, None, None] - centre_x[None, None, :]
    ry = (np.arange(ny) * sy)[None, :, None] - centre_y[None, None, :]
    radial = np.hypot(rx, ry)
    slices = np.arange(nz)[None, None, :]

    cord = (radial <= spec.cord_radius_mm) & (slices <= spec.cord_top)
    canal = radial <= spec.canal_radius_mm
    rootlets = np.zeros(spec.dims, dtype=np.uint8)
    # Lower levels are painted last so they win where overlap is allowed.
    for rootlet in reversed(spec.rootlets):
        rootlets[_rootlet_mask(spec, rootlet, rx, ry, slices)] = rootlet.level

    rng = np.random.default_rng(spec.seed)
    image = np.broadcast_to(
        BACKGROUND_INTENSITY + 20.0 * slices / max(nz - 1, 1), spec.dims
    ).astype(np.float64)
    image[canal] = CANAL_INTENSITY
    image[cord] = CORD_INTENSITY
    image[rootlets > 0] = ROOTLET_INTENSITY
    if spec.noise_sd > 0:
        image += rng.normal(0.0, spec.noise_sd, size=spec.dims)

    pmj = PmjPoint.from_voxel(
        (
            centre_x[spec.pmj_slice] / sx,
            centre_y[spec.pmj_slice] / sy,
            float(spec.pmj_slice),
        ),
        spec.affine,
    )
    truth = tuple(_truth_extent(spec, r) for r in spec.rootlets)
    logger.info(
        "Generated %s phantom dims=%s levels=%s seed=%d",
        spec.curve,
        spec.dims,
        [r.level for r in spec.rootlets],
        spec.seed,
    )
    return Phantom(
        spec=spec,
        image=Volume3D(image, spec.affine),
        cord=Volume3D(cord, spec.affine, label=True),
        rootlets=Volume3D(rootlets, spec.affine, label=True),
        pmj=pmj,
        truth=truth,
    )


def truth_manifest(phantom: Phantom) -> dict[str, Any]:
    return {
        "generator": {"rng": RNG_ALGORITHM, "seed": phantom.spec.seed},
        "spec": phantom.spec.to_dict(),
        "pmj_mm": list(phantom.pmj.xyz_mm),
        "levels": [extent.to_dict() for extent in phantom.truth],
    }


PHANTOM_FILES = {
    "image": "image.nii.gz",
    "cord": "cord.nii.gz",
    "rootlets": "rootlets.nii.gz",
    "pmj": "pmj.nii.gz",
    "levels_truth": "levels_truth.nii.gz",
}


def write_phantom(phantom: Phantom, out_dir: str | Path) -> dict[str, Path]:
    """Write the phantom volumes; the PMJ label marks the voxel nearest the PMJ."""

    out_dir = Path(out_dir)
    ijk = np.rint(phantom.cord.physical_to_voxel(phantom.pmj.as_array())).astype(int)
    ijk = np.clip(ijk, 0, np.asarray(phantom.cord.dims) - 1)
    pmj_label = np.zeros(phantom.cord.dims, dtype=np.uint8)
    pmj_label[tuple(ijk)] = 1
    levels_truth = project_levels(phantom.truth, phantom.cord).flattened
    volumes = {
        "image": phantom.image,
        "cord": phantom.cord,
        "rootlets": phantom.rootlets,
        "pmj": phantom.cord.with_data(pmj_label, label=True),
        "levels_truth": levels_truth,
    }
    return {key: write_nifti(volumes[key], out_dir / name) for key, name in PHANTOM_FILES.items()}


@dataclass(frozen=True, slots=True, eq=False)
class StudyEntry:
    spacing_mm: float
    dims: tuple[int, int, int]
    extents: tuple[LevelExtent, ...]
    mae_mm: float | None
    flags: tuple[str, ...] = field(default=())
    image: Volume3D | None = None

    def mid_distances(self) -> dict[int, float]:
        return {
            e.level: float(e.pmj_mid_mm)
            for e in self.extents
            if not e.is_empty and e.pmj_mid_mm is not None
        }


@dataclass(frozen=True, slots=True, eq=False)
class ResampleStudy:
    native_spacing_mm: float
    reference: dict[int, float]
    entries: tuple[StudyEntry, ...]

    def mae(self) -> dict[float, float | None]:
        return {entry.spacing_mm: entry.mae_mm for entry in self.entries}

    @property
    def flags(self) -> tuple[str, ...]:
        return tuple(flag for entry in self.entries for flag in entry.flags)

    def rows(self) -> list[dict[str, Any]]:
        rows: list[dict[str, Any]] = []
        for entry in self.entries:
            mids = entry.mid_distances()
            for level in sorted(self.reference):
                value = mids.get(level)
                error = None if value is None else abs(value - self.reference[level])
                rows.append(
                    {
                        "spacing_mm": entry.spacing_mm,
                        "level": level,
                        "reference_mm": self.reference[level],
                        "pmj_mid_mm": value,
                        "abs_error_mm": error,
                    }
                )
        return rows


def _study_entry(
    spacing: float,
    rootlets: Volume3D,
    cord: Volume3D,
    pmj: PmjPoint,
    image: Volume3D | None,
    reference: LevelsResult,
    dilation: DilationConfig,
    smoothing_window: int,
) -> StudyEntry:
    masks = ResampleSpec.iso(spacing, "nearest")
    cord_s = resample_iso(cord, masks)
    rootlets_s = resample_iso(rootlets, masks)
    image_s = None
    if image is not None:
        image_s = resample_iso(image, ResampleSpec.iso(spacing, "linear"))
        logger.debug("Resampled image to %s at %.2f mm", image_s.dims, spacing)
    result = run_levels(
        rootlets_s, cord_s, pmj, dilation=dilation, smoothing_window=smoothing_window
    )
    mae_flags: list[str] = []
    mae: float | None
    try:
        mae = mae_levels(reference.mid_distances(), result.mid_distances(), flags=mae_flags)
    except DegenerateInputError:
        mae = None
        mae_flags.append("levels:no_shared_levels")
    prefix = f"spacing_{spacing:g}"
    flags = [f"{prefix}:{flag}" for flag in (*result.flags, *mae_flags)]
    return StudyEntry(float(spacing), cord_s.dims, result.extents, mae, tuple(flags), image_s)


def resample_study(
    rootlets: Volume3D,
    cord: Volume3D,
    pmj: PmjPoint,
    spacings: Sequence[float],
    *,
    image: Volume3D | None = None,
    dilation: DilationConfig | None = None,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
    threads: int | None = None,
) -> ResampleStudy:
    """Run the level pipeline at each isotropic spacing; MAE of mid distances vs native."""

    dilation = dilation or DilationConfig()
    reference = run_levels(
        rootlets, cord, pmj, dilation=dilation, smoothing_window=smoothing_window
    )
    ordered = sorted({float(s) for s in spacings})
    n_jobs = min(resolve_threads(threads), max(len(ordered), 1))
    entries = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_study_entry)(
            s, rootlets, cord, pmj, image, reference, dilation, smoothing_window
        )
        for s in ordered
    )
    for entry in entries:
        logger.info("Resample %.2f mm: MAE %s", entry.spacing_mm, entry.mae_mm)
    return ResampleStudy(
        native_spacing_mm=min(cord.spacing),
        reference=reference.mid_distances(),
        entries=tuple(entries),
    )


def perturb_resample_study(
    phantom: Phantom,
    spacings: Sequence[float],
    **options: Any,
) -> ResampleStudy:
    return resample_study(
        phantom.rootlets, phantom.cord, phantom.pmj, spacings, image=phantom.image, **options
    )
