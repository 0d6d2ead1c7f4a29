from pathlib import Path

import pytest

from rootlet_levels.config import THREADS_ENV, DilationConfig, RunConfig, resolve_threads
from rootlet_levels.exceptions import ArgumentError


def test_resolve_threads_prefers_explicit_value(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "6")
    assert resolve_threads(2) == 2
    assert resolve_threads() == 6


def test_resolve_threads_defaults_to_one(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "  ")
    assert resolve_threads() == 1


@pytest.mark.parametrize("raw", ["many", "0", "-3"])
def test_resolve_threads_rejects_bad_env(monkeypatch, raw):
    monkeypatch.setenv(THREADS_ENV, raw)
    with pytest.raises(ArgumentError):
        resolve_threads()


def test_dilation_radius_resolution():
    assert DilationConfig().resolve_radius((0.8, 0.8, 0.8)) == 3
    assert DilationConfig(2.0, unit="MM").resolve_radius((0.5, 0.6, 1.0)) == 4
    assert DilationConfig(0.1, unit="mm").resolve_radius((0.8, 0.8, 0.8)) == 1
    with pytest.raises(ArgumentError):
        DilationConfig(2.5).resolve_radius((1.0, 1.0, 1.0))


@pytest.mark.parametrize(
    "kwargs",
    [{"radius": 0}, {"unit": "cm"}, {"shape": "disk"}],
)
def test_dilation_config_validation(kwargs):
    with pytest.raises(ArgumentError):
        DilationConfig(**kwargs)


def test_run_config_validation_and_resolved_view(tmp_path):
    config = RunConfig(
        out_dir=tmp_path,
        rootlets=Path("r.nii.gz"),
        cord=Path("c.nii.gz"),
        output_format="csv",
        extras={"subject": "sub-01"},
    )
    assert config.wants_csv and not config.wants_json
    assert config.input_paths() == [Path("r.nii.gz"), Path("c.nii.gz")]
    resolved = config.resolved()
    assert resolved["pmj"] is None
    assert resolved["dilation"] == {"radius": 3, "unit": "vox", "shape": "ball"}
    assert resolved["extras"] == {"subject": "sub-01"}

    for bad in ({"smoothing_window": 4}, {"cov_convention": "biased"}, {"output_format": "xml"}):
        with pytest.raises(ArgumentError):
            RunConfig(out_dir=tmp_path, **bad)
