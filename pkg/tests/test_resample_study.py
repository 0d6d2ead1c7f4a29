import pytest

from rootlet_levels.phantom import (
    PhantomSpec,
    RootletSpec,
    generate_phantom,
    perturb_resample_study,
    resample_study,
)

NATIVE = 0.6


def _straight_phantom():
    spec = PhantomSpec.default(spacing=NATIVE, angulation_max_deg=0.0, rootlet_radius_mm=1.5)
    return generate_phantom(spec)


def test_native_spacing_reproduces_the_reference():
    phantom = _straight_phantom()
    study = resample_study(phantom.rootlets, phantom.cord, phantom.pmj, [NATIVE, 1.0])
    assert study.native_spacing_mm == pytest.approx(NATIVE)
    assert sorted(study.reference) == [2, 3, 4, 5, 6, 7, 8]
    mae = study.mae()
    assert mae[NATIVE] == pytest.approx(0.0, abs=1e-9)
    assert mae[1.0] is not None


def test_error_stays_within_the_coarser_voxel():
    phantom = _straight_phantom()
    spacings = [0.6, 0.8, 1.0, 1.2, 1.4, 1.6]
    study = perturb_resample_study(phantom, spacings, threads=2)
    assert [entry.spacing_mm for entry in study.entries] == spacings
    mae = study.mae()
    assert mae[NATIVE] == 0.0
    for spacing, value in mae.items():
        assert value is not None
        assert value <= spacing
    assert not [flag for flag in study.flags if flag.endswith(":empty")]


def test_study_entries_carry_the_resampled_image():
    phantom = _straight_phantom()
    study = perturb_resample_study(phantom, [1.2])
    (entry,) = study.entries
    assert entry.image is not None
    assert entry.image.dims == entry.dims
    assert entry.image.spacing == pytest.approx((1.2, 1.2, 1.2))
    assert not entry.image.label

    without = resample_study(phantom.rootlets, phantom.cord, phantom.pmj, [1.2])
    assert without.entries[0].image is None


def test_study_is_the_same_with_more_workers():
    phantom = _straight_phantom()
    serial = resample_study(phantom.rootlets, phantom.cord, phantom.pmj, [1.4, 0.9], threads=1)
    parallel = resample_study(phantom.rootlets, phantom.cord, phantom.pmj, [0.9, 1.4], threads=2)
    assert serial.mae() == parallel.mae()
    assert serial.rows() == parallel.rows()


def test_level_missed_by_coarse_sampling_is_flagged():
    spec = PhantomSpec(
        spacing=(NATIVE, NATIVE, NATIVE),
        rootlets=(RootletSpec(4, 100, 90), RootletSpec(5, 50, 50)),
    )
    phantom = generate_phantom(spec)
    study = resample_study(phantom.rootlets, phantom.cord, phantom.pmj, [1.6])
    assert sorted(study.reference) == [4, 5]

    (entry,) = study.entries
    assert 5 not in entry.mid_distances()
    assert "spacing_1.6:level_5:empty" in entry.flags
    assert "spacing_1.6:level_5:missing_from_test" in entry.flags
    assert entry.mae_mm is not None

    rows = {row["level"]: row for row in study.rows()}
    assert rows[5]["pmj_mid_mm"] is None
    assert rows[5]["abs_error_mm"] is None
    assert rows[4]["abs_error_mm"] == pytest.approx(entry.mae_mm)
