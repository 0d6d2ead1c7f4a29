"""NIfTI-1 volumes: typed container, reader/writer and orientation helpers."""

from __future__ import annotations

import gzip
import json
import logging
import zlib
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import nibabel as nib
import numpy as np
from nibabel.affines import apply_affine
from nibabel.filebasedimages import ImageFileError
from nibabel.orientations import aff2axcodes
from nibabel.spatialimages import HeaderDataError

from .exceptions import (
    ArgumentError,
    ContractError,
    DegenerateInputError,
    GeometryError,
    UnsupportedDatatypeError,
    VolumeFormatError,
    VolumeIOError,
)

logger = logging.getLogger(__name__)

NIFTI1_MAGIC = b"n+1\x00"
NIFTI1_HEADER_SIZE = 348
MIN_VOX_OFFSET = 352

# NIfTI-1 datatype codes accepted on read and write.
SUPPORTED_DATATYPES: dict[int, np.dtype] = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    256: np.dtype(np.int8),
    512: np.dtype(np.uint16),
}
_SUPPORTED_NUMPY = frozenset(SUPPORTED_DATATYPES.values())

ROOTLET_CLASSES: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
LABEL_DTYPE = np.dtype(np.uint8)

_GRID_RTOL = 1e-5
_GRID_ATOL = 1e-6


@dataclass(frozen=True, slots=True, eq=False)
class Volume3D:
    """A 3D grid with a voxel-to-mm affine. ``label`` marks integer label maps."""

    data: np.ndarray
    affine: np.ndarray
    label: bool = False

    def __post_init__(self) -> None:
        data = np.array(self.data, copy=True)
        if data.ndim != 3:
            raise ContractError(f"volume data must be 3D, got shape {data.shape}")
        if any(n <= 0 for n in data.shape):
            raise ContractError(f"volume dims must be positive, got {data.shape}")
        affine = np.array(self.affine, dtype=np.float64, copy=True)
        if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
            raise ContractError("affine must be a finite 4x4 matrix")
        if np.any(np.linalg.norm(affine[:3, :3], axis=0) <= 0):
            raise GeometryError("affine has a zero-length voxel axis")
        if self.label:
            data = _as_label_array(data)
        data.setflags(write=False)
        affine.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "affine", affine)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)  # type: ignore[return-value]

    @property
    def spacing(self) -> tuple[float, float, float]:
        norms = np.linalg.norm(self.affine[:3, :3], axis=0)
        return tuple(float(n) for n in norms)  # type: ignore[return-value]

    @property
    def orientation(self) -> str:
        return orientation_of(self.affine)

    @property
    def is_integer(self) -> bool:
        return bool(np.issubdtype(self.data.dtype, np.integer))

    def with_data(self, data: np.ndarray, *, label: bool | None = None) -> Volume3D:
        """Return a volume on the same grid holding ``data``."""

        data = np.asarray(data)
        if data.shape != self.data.shape:
            raise ContractError(f"data shape {data.shape} does not match grid {self.dims}")
        return Volume3D(data, self.affine, self.label if label is None else label)

    def voxel_to_physical(self, ijk: Sequence[float] | np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(ijk, dtype=np.float64))
        return apply_affine(self.affine, points).reshape(np.shape(ijk))

    def physical_to_voxel(self, xyz: Sequence[float] | np.ndarray) -> np.ndarray:
        inverse = np.linalg.inv(self.affine)
        points = np.atleast_2d(np.asarray(xyz, dtype=np.float64))
        return apply_affine(inverse, points).reshape(np.shape(xyz))

    def labels_present(self) -> tuple[int, ...]:
        values = np.unique(self.data)
        return tuple(int(v) for v in values if v != 0)


def label_map(data: np.ndarray, affine: np.ndarray) -> Volume3D:
    return Volume3D(np.asarray(data), affine, label=True)


def _as_label_array(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.bool_:
        return data.astype(LABEL_DTYPE)
    if not np.issubdtype(data.dtype, np.integer):
        if not np.all(np.isfinite(data)) or not np.all(data == np.round(data)):
            raise ContractError("label maps must hold integral values")
    if data.size and (data.min() < 0 or data.max() > np.iinfo(LABEL_DTYPE).max):
        raise ContractError("label values must lie in [0, 255]")
    return data.astype(LABEL_DTYPE)


def same_grid(a: Volume3D, b: Volume3D) -> bool:
    return a.dims == b.dims and bool(
        np.allclose(a.affine, b.affine, rtol=_GRID_RTOL, atol=_GRID_ATOL)
    )


def require_same_grid(*volumes: Volume3D, what: str = "volumes") -> None:
    first = volumes[0]
    for other in volumes[1:]:
        if not same_grid(first, other):
            raise ContractError(
                f"grid mismatch between {what}: dims {first.dims} vs {other.dims}",
                details={"affines": [first.affine.tolist(), other.affine.tolist()]},
            )


def validate_binary(vol: Volume3D, *, what: str = "mask") -> None:
    values = set(np.unique(vol.data).tolist())
    if not values <= {0, 1}:
        raise ContractError(f"{what} must be binary, found values {sorted(values)}")


def validate_rootlet_labels(vol: Volume3D, *, what: str = "rootlets") -> None:
    values = set(np.unique(vol.data).tolist())
    allowed = {0, *ROOTLET_CLASSES}
    if not values <= allowed:
        raise ContractError(
            f"{what} labels must be within {{0, 2..8}}, found {sorted(values - allowed)}"
        )


def volumes_equal(a: Volume3D, b: Volume3D, *, atol: float = 0.0) -> bool:
    """Grid and voxel equality; exact for integers, ``atol`` for floats."""

    if not same_grid(a, b):
        return False
    if a.is_integer and b.is_integer:
        return bool(np.array_equal(a.data, b.data))
    return bool(np.allclose(a.data, b.data, rtol=0.0, atol=atol))


def orientation_of(affine: np.ndarray) -> str:
    """Return the 3-letter code of the dominant direction of each voxel axis (RAS+ letters)."""

    affine = np.asarray(affine, dtype=np.float64)
    rotation = affine[:3, :3]
    scale = float(np.prod(np.linalg.norm(rotation, axis=0)))
    if scale == 0.0 or abs(float(np.linalg.det(rotation))) <= 1e-12 * scale:
        raise GeometryError("affine is singular; orientation is undefined")
    return "".join(aff2axcodes(affine))


def require_axis_aligned(affine: np.ndarray, *, tol: float = 1e-6) -> None:
    """Reject sheared or oblique affines (each voxel axis must map to one world axis)."""

    rotation = np.abs(np.asarray(affine, dtype=np.float64)[:3, :3])
    norms = rotation.max(axis=0)
    dominant = rotation > tol * norms
    if not np.all(dominant.sum(axis=0) == 1):
        raise GeometryError("affine is not axis-aligned; reorient or reslice first")


def _open_raw(path: Path):
    if path.name.endswith(".gz"):
        return gzip.open(path, "rb")
    return path.open("rb")


def _raw_vox_offset(path: Path) -> float:
    """Check the magic of the on-disk header and return its ``vox_offset``.

    nibabel resets ``vox_offset`` on load, so it is read from the raw bytes.
    """

    try:
        with _open_raw(path) as handle:
            head = handle.read(NIFTI1_HEADER_SIZE)
    except (OSError, EOFError, zlib.error) as exc:
        raise VolumeFormatError(f"{path}: cannot read NIfTI header ({exc})") from exc
    if len(head) < NIFTI1_HEADER_SIZE:
        raise VolumeIOError(f"{path}: truncated header ({len(head)} bytes)")
    if head[344:348] != NIFTI1_MAGIC:
        raise VolumeFormatError(
            f"{path}: bad NIfTI-1 magic {head[344:348]!r}", details={"expected": "n+1\\0"}
        )
    if np.frombuffer(head, dtype="<i4", count=1)[0] == NIFTI1_HEADER_SIZE:
        order = "<"
    elif np.frombuffer(head, dtype=">i4", count=1)[0] == NIFTI1_HEADER_SIZE:
        order = ">"
    else:
        raise VolumeFormatError(f"{path}: sizeof_hdr is not {NIFTI1_HEADER_SIZE}")
    return float(np.frombuffer(head, dtype=f"{order}f4", count=1, offset=108)[0])


def _best_affine(header: nib.Nifti1Header) -> np.ndarray:
    sform, scode = header.get_sform(coded=True)
    if sform is not None and int(scode) > 0:
        return np.asarray(sform, dtype=np.float64)
    qform, qcode = header.get_qform(coded=True)
    if qform is not None and int(qcode) > 0:
        return np.asarray(qform, dtype=np.float64)
    zooms = [float(z) if z > 0 else 1.0 for z in header.get_zooms()[:3]]
    return np.diag([*zooms, 1.0])


def read_nifti(path: str | Path, *, label: bool = False) -> Volume3D:
    """Read a single-file NIfTI-1 volume (``.nii`` or ``.nii.gz``).

    Scaling (``scl_slope``/``scl_inter``) is applied when the slope is nonzero. The
    affine comes from the sform when its code is positive, else the qform, else a
    spacing diagonal. ``label=True`` converts the data to an integer label map.
    """

    path = Path(path)
    if not path.is_file():
        raise VolumeIOError(f"{path}: no such file")
    vox_offset = _raw_vox_offset(path)
    if vox_offset < MIN_VOX_OFFSET:
        raise VolumeFormatError(f"{path}: vox_offset {vox_offset:g} < {MIN_VOX_OFFSET}")
    try:
        image = nib.Nifti1Image.from_filename(str(path), mmap=False)
    except (ImageFileError, HeaderDataError, ValueError) as exc:
        raise VolumeFormatError(f"{path}: not a readable NIfTI-1 file ({exc})") from exc

    header = image.header
    code = int(header["datatype"])
    if code not in SUPPORTED_DATATYPES:
        raise UnsupportedDatatypeError(
            f"{path}: NIfTI datatype code {code} is not supported",
            details={"supported": sorted(SUPPORTED_DATATYPES)},
        )

    shape = tuple(int(n) for n in image.shape)
    if len(shape) > 3 and all(n == 1 for n in shape[3:]):
        shape = shape[:3]
    if len(shape) != 3:
        raise VolumeFormatError(f"{path}: expected a 3D volume, got shape {image.shape}")

    try:
        data = np.array(image.dataobj).reshape(shape)
    except (OSError, EOFError, ValueError, zlib.error) as exc:
        raise VolumeIOError(f"{path}: truncated or corrupt voxel data ({exc})") from exc

    volume = Volume3D(data, _best_affine(header), label=label)
    logger.info("Read %s dims=%s spacing=%s", path, volume.dims, volume.spacing)
    return volume


def _storage_dtype(vol: Volume3D) -> np.dtype:
    if vol.label:
        return LABEL_DTYPE
    dtype = vol.data.dtype
    if dtype in _SUPPORTED_NUMPY:
        return dtype
    if dtype == np.bool_:
        return LABEL_DTYPE
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(np.int32)
        if vol.data.size == 0 or (vol.data.min() >= info.min and vol.data.max() <= info.max):
            return np.dtype(np.int32)
    return np.dtype(np.float64)


def write_nifti(vol: Volume3D, path: str | Path) -> Path:
    """Write ``vol`` as NIfTI-1; gzip when the name ends with ``.nii.gz``."""

    path = Path(path)
    if not (path.name.endswith(".nii") or path.name.endswith(".nii.gz")):
        raise ArgumentError(f"{path}: output name must end with .nii or .nii.gz")
    if any(n <= 0 for n in vol.data.shape):
        raise ContractError("refusing to write a volume with empty dims")

    dtype = _storage_dtype(vol)
    data = np.asarray(vol.data).astype(dtype, copy=False)
    image = nib.Nifti1Image(data, vol.affine)
    image.header.set_data_dtype(dtype)
    image.header.set_xyzt_units("mm")
    image.set_sform(vol.affine, code=1)
    image.set_qform(vol.affine, code=1)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        image.to_filename(str(path))
    except OSError as exc:
        raise VolumeIOError(f"{path}: cannot write volume ({exc})") from exc
    logger.info("Wrote %s (%s, dims=%s)", path, dtype.name, vol.dims)
    return path


@dataclass(frozen=True, slots=True)
class PmjPoint:
    """Pontomedullary junction location in physical (mm) coordinates."""

    xyz_mm: tuple[float, float, float]
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        point = tuple(float(v) for v in self.xyz_mm)
        if len(point) != 3 or not all(np.isfinite(point)):
            raise ArgumentError(f"PMJ must be 3 finite coordinates, got {self.xyz_mm}")
        object.__setattr__(self, "xyz_mm", point)

    @classmethod
    def from_voxel(cls, ijk: Sequence[float], affine: np.ndarray) -> PmjPoint:
        xyz = apply_affine(np.asarray(affine, dtype=np.float64), list(ijk))
        return cls(tuple(float(v) for v in xyz))  # type: ignore[arg-type]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.xyz_mm, dtype=np.float64)

    def within(self, vol: Volume3D) -> bool:
        """True when the point lies inside the volume's voxel bounding box."""

        ijk = vol.physical_to_voxel(self.as_array())
        upper = np.asarray(vol.dims, dtype=np.float64) - 0.5
        return bool(np.all(ijk >= -0.5 - 1e-9) and np.all(ijk <= upper + 1e-9))


def pmj_from_label(vol: Volume3D) -> PmjPoint:
    """PMJ from a label volume: the single nonzero voxel, or the centroid of several."""

    coords = np.argwhere(np.asarray(vol.data) != 0)
    if coords.size == 0:
        raise DegenerateInputError("PMJ label volume holds no nonzero voxel")
    flags: tuple[str, ...] = ()
    if len(coords) > 1:
        logger.warning("PMJ label has %d voxels; using their centroid", len(coords))
        flags = ("pmj:multiple_voxels",)
    center = coords.mean(axis=0)
    point = PmjPoint.from_voxel(center, vol.affine)
    return PmjPoint(point.xyz_mm, flags)


def pmj_from_json(path: str | Path, reference: Volume3D | None = None) -> PmjPoint:
    """Read ``{"x_mm", "y_mm", "z_mm"}`` or ``{"voxel": [i, j, k]}`` (needs ``reference``)."""

    path = Path(path)
    try:
        payload: Any = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise VolumeIOError(f"{path}: cannot read PMJ JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ArgumentError(f"{path}: PMJ JSON must be an object")
    if all(key in payload for key in ("x_mm", "y_mm", "z_mm")):
        return PmjPoint((payload["x_mm"], payload["y_mm"], payload["z_mm"]))
    voxel = payload.get("voxel")
    if isinstance(voxel, list) and len(voxel) == 3:
        if reference is None:
            raise ArgumentError(f"{path}: voxel PMJ coordinates need a reference volume")
        return PmjPoint.from_voxel(voxel, reference.affine)
    raise ArgumentError(f"{path}: PMJ JSON needs x_mm/y_mm/z_mm or voxel")


def read_pmj(path: str | Path, reference: Volume3D | None = None) -> PmjPoint:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return pmj_from_json(path, reference)
    return pmj_from_label(read_nifti(path))

