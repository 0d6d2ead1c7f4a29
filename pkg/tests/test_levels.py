import numpy as np
import pytest
from scipy import ndimage

from rootlet_levels.config import DilationConfig
from rootlet_levels.exceptions import ContractError
from rootlet_levels.levels import (
    LevelExtent,
    intersect_rootlets_cord,
    level_lengths,
    project_levels,
    run_levels,
    summarize_lengths,
)
from rootlet_levels.preprocess import StructuringElement
from rootlet_levels.volume_io import PmjPoint, Volume3D

SPACING = 0.8
DIMS = (33, 33, 120)
AFFINE = np.diag([SPACING, SPACING, SPACING, 1.0])


def _cord(first=5, last=110):
    i, j = np.meshgrid(np.arange(DIMS[0]), np.arange(DIMS[1]), indexing="ij")
    disk = (i - 16) ** 2 + (j - 16) ** 2 <= 16
    data = np.zeros(DIMS, dtype=np.uint8)
    data[:, :, first : last + 1] = disk[:, :, None]
    return Volume3D(data, AFFINE, label=True)


def _rootlets(spans, column=(16, 10)):
    """Class ``level`` voxels just dorsal of the cord on each slice of its span."""

    data = np.zeros(DIMS, dtype=np.uint8)
    for level, (low, high) in spans.items():
        data[column[0], column[1] - 1 : column[1] + 2, low : high + 1] = level
    return Volume3D(data, AFFINE, label=True)


def _pmj(slice_index=100):
    return PmjPoint.from_voxel((16, 16, slice_index), AFFINE)


def test_single_level_extent_on_straight_cord():
    result = run_levels(_rootlets({4: (50, 59)}), _cord(), _pmj())
    extent = result.extent(4)
    assert (extent.rostral_slice, extent.caudal_slice, extent.mid_slice) == (59, 50, 55)
    assert extent.pmj_rostral_mm == pytest.approx(32.8, abs=1e-6)
    assert extent.pmj_mid_mm == pytest.approx(36.0, abs=1e-6)
    assert extent.pmj_caudal_mm == pytest.approx(40.0, abs=1e-6)
    assert extent.length_mm == pytest.approx(7.2, abs=1e-6)
    assert extent.flags == ()
    assert result.mid_distances() == {4: pytest.approx(36.0, abs=1e-6)}


def test_extents_are_ordered_by_distance():
    result = run_levels(_rootlets({3: (70, 80), 5: (30, 44)}), _cord(), _pmj())
    for level in (3, 5):
        extent = result.extent(level)
        assert extent.rostral_slice >= extent.mid_slice >= extent.caudal_slice
        assert extent.pmj_rostral_mm <= extent.pmj_mid_mm <= extent.pmj_caudal_mm
    assert result.extent(3).pmj_mid_mm < result.extent(5).pmj_mid_mm


def test_inferior_slice_axis_mirrors_the_extent():
    cord = _cord()
    rootlets = _rootlets({4: (50, 59)})
    flipped_affine = np.array(AFFINE)
    flipped_affine[2, 2] = -SPACING
    flipped_affine[2, 3] = (DIMS[2] - 1) * SPACING
    flipped_cord = Volume3D(np.array(cord.data)[:, :, ::-1], flipped_affine, label=True)
    flipped_rootlets = Volume3D(np.array(rootlets.data)[:, :, ::-1], flipped_affine, label=True)
    pmj = PmjPoint.from_voxel((16, 16, DIMS[2] - 1 - 100), flipped_affine)

    extent = run_levels(flipped_rootlets, flipped_cord, pmj).extent(4)
    assert (extent.rostral_slice, extent.caudal_slice, extent.mid_slice) == (60, 69, 64)
    assert extent.pmj_mid_mm == pytest.approx(36.0, abs=1e-6)
    assert extent.length_mm == pytest.approx(7.2, abs=1e-6)


def test_single_slice_level_has_zero_length():
    extent = run_levels(_rootlets({6: (30, 30)}), _cord(), _pmj()).extent(6)
    assert extent.rostral_slice == extent.caudal_slice == extent.mid_slice == 30
    assert extent.length_mm == pytest.approx(0.0, abs=1e-12)


def test_missing_levels_are_flagged_empty():
    result = run_levels(_rootlets({4: (50, 59)}), _cord(), _pmj())
    assert [e.level for e in result.extents] == [2, 3, 4, 5, 6, 7, 8]
    assert result.extent(2).is_empty
    assert result.extent(2).rostral_slice is None
    assert "level_2:empty" in result.flags
    assert "levels:all_empty" not in result.flags
    assert not result.all_empty


def test_no_rootlets_is_all_empty():
    empty = Volume3D(np.zeros(DIMS, dtype=np.uint8), AFFINE, label=True)
    result = run_levels(empty, _cord(), _pmj())
    assert result.all_empty
    assert "levels:all_empty" in result.flags
    assert result.mid_distances() == {}
    assert not np.any(result.level_map.flattened.data)


def test_distant_rootlets_do_not_count():
    data = np.array(_rootlets({4: (50, 59)}).data)
    data[16, 1, 70:76] = 4
    result = run_levels(Volume3D(data, AFFINE, label=True), _cord(), _pmj())
    assert result.extent(4).rostral_slice == 59


def test_levels_beyond_the_cord_end_are_clamped():
    data = np.zeros(DIMS, dtype=np.uint8)
    data[16, 16, 2:5] = 8
    result = run_levels(Volume3D(data, AFFINE, label=True), _cord(), _pmj())
    assert "level_8:clamped_to_centerline" in result.flags
    assert result.extent(8).pmj_mid_mm == pytest.approx((100 - 5) * SPACING, abs=1e-6)


def test_pmj_outside_the_volume_is_flagged():
    pmj = PmjPoint.from_voxel((16, 16, 130), AFFINE)
    result = run_levels(_rootlets({4: (50, 59)}), _cord(first=5, last=119), pmj)
    assert "pmj:outside_volume" in result.flags
    assert result.extent(4).pmj_mid_mm == pytest.approx((119 - 55) * SPACING + 11 * SPACING)


def test_intersection_matches_euclidean_distance_oracle():
    rng = np.random.default_rng(6)
    cord = _cord()
    labels = rng.choice([0, 0, 0, 2, 5, 7], size=DIMS).astype(np.uint8)
    rootlets = Volume3D(labels, AFFINE, label=True)
    for radius in (1, 2, 3):
        zone = ndimage.distance_transform_edt(~np.asarray(cord.data, dtype=bool)) <= radius + 1e-9
        hits = intersect_rootlets_cord(rootlets, cord, StructuringElement("ball", radius))
        assert sorted(hits) == [2, 3, 4, 5, 6, 7, 8]
        for level, volume in hits.items():
            assert np.array_equal(np.asarray(volume.data, dtype=bool), (labels == level) & zone)


def test_larger_dilation_never_shrinks_a_level():
    data = np.zeros(DIMS, dtype=np.uint8)
    for step in range(8):
        data[16, 11 - step, 60 - 2 * step : 64 - 2 * step] = 5
    rootlets = Volume3D(data, AFFINE, label=True)
    previous = None
    for radius in (1, 2, 3, 4, 5):
        result = run_levels(rootlets, _cord(), _pmj(), dilation=DilationConfig(radius=radius))
        extent = result.extent(5)
        if previous is not None:
            assert extent.caudal_slice <= previous.caudal_slice
            assert extent.rostral_slice >= previous.rostral_slice
            assert extent.length_mm >= previous.length_mm - 1e-9
        previous = extent


def test_dilation_radius_in_mm_rounds_to_voxels():
    mm = run_levels(
        _rootlets({4: (50, 59)}), _cord(), _pmj(), dilation=DilationConfig(2.4, unit="mm")
    )
    vox = run_levels(_rootlets({4: (50, 59)}), _cord(), _pmj(), dilation=DilationConfig(3))
    assert mm.extent(4) == vox.extent(4)


def test_projection_sends_overlap_to_the_lower_class():
    extents = [
        LevelExtent(3, rostral_slice=50, caudal_slice=40, mid_slice=45),
        LevelExtent(4, rostral_slice=58, caudal_slice=48, mid_slice=53),
        LevelExtent.empty(6),
    ]
    cord = _cord()
    level_map = project_levels(extents, cord)
    mask = np.asarray(cord.data, dtype=bool)
    flat = np.asarray(level_map.flattened.data)
    for k in (48, 49, 50):
        assert set(np.unique(flat[:, :, k][mask[:, :, k]]).tolist()) == {3}
    assert set(np.unique(flat[:, :, 55][mask[:, :, 55]]).tolist()) == {4}
    assert not np.any(flat[~mask])

    assert sorted(level_map.channels) == [2, 3, 4, 5, 6, 7, 8]
    for level in (3, 4):
        channel = np.asarray(level_map.channel(level).data, dtype=bool)
        assert np.all(mask[channel])
        occupied = np.flatnonzero(channel.any(axis=(0, 1)))
        assert np.array_equal(occupied, np.arange(occupied[0], occupied[-1] + 1))
    assert not np.any(level_map.channel(6).data)


def test_projection_rejects_label_map_as_cord():
    labels = np.zeros(DIMS, dtype=np.uint8)
    labels[0, 0, 0] = 3
    with pytest.raises(ContractError):
        project_levels([], Volume3D(labels, AFFINE, label=True))


def test_level_lengths_of_ten_slices():
    result = run_levels(_rootlets({2: (90, 99), 7: (20, 29)}), _cord(), _pmj())
    lengths = level_lengths(result.extents)
    assert sorted(lengths) == [2, 7]
    for value in lengths.values():
        assert value == pytest.approx(7.2, abs=1e-6)


def test_summarize_lengths_across_images():
    short = run_levels(_rootlets({4: (50, 59)}), _cord(), _pmj())
    long = run_levels(_rootlets({4: (45, 59), 5: (30, 34)}), _cord(), _pmj())
    summary = summarize_lengths([short, long])
    assert summary[4]["n"] == 2
    assert summary[4]["mean_mm"] == pytest.approx((7.2 + 11.2) / 2, abs=1e-6)
    assert summary[4]["sd_mm"] == pytest.approx(np.std([7.2, 11.2], ddof=1), abs=1e-6)
    assert summary[5] == {"n": 1, "mean_mm": pytest.approx(3.2, abs=1e-6), "sd_mm": None}


def test_grid_mismatch_is_a_contract_error():
    other = Volume3D(np.zeros((33, 33, 100), dtype=np.uint8), AFFINE, label=True)
    with pytest.raises(ContractError):
        run_levels(other, _cord(), _pmj())
