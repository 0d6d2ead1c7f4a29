"""Spinal levels and PMJ distances from nerve-rootlet segmentations."""

from .config import DilationConfig, RunConfig
from .consensus import RaterSet, staple_binary, staple_multiclass
from .exceptions import RootletLevelsError
from .geometry import Centerline, extract_centerline, pmj_distance
from .levels import LevelExtent, LevelsResult, run_levels
from .phantom import PhantomSpec, generate_phantom, resample_study
from .volume_io import PmjPoint, Volume3D, read_nifti, read_pmj, write_nifti

__version__ = "0.1.0"

__all__ = [
    "Centerline",
    "DilationConfig",
    "LevelExtent",
    "LevelsResult",
    "PhantomSpec",
    "PmjPoint",
    "RaterSet",
    "RootletLevelsError",
    "RunConfig",
    "Volume3D",
    "__version__",
    "extract_centerline",
    "generate_phantom",
    "pmj_distance",
    "read_nifti",
    "read_pmj",
    "resample_study",
    "run_levels",
    "staple_binary",
    "staple_multiclass",
    "write_nifti",
]
