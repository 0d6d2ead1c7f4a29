import gzip
import itertools
import json

import nibabel as nib
import numpy as np
import pytest

from rootlet_levels.exceptions import (
    ArgumentError,
    ContractError,
    DegenerateInputError,
    GeometryError,
    UnsupportedDatatypeError,
    VolumeFormatError,
    VolumeIOError,
)
from rootlet_levels.volume_io import (
    SUPPORTED_DATATYPES,
    PmjPoint,
    Volume3D,
    orientation_of,
    pmj_from_json,
    pmj_from_label,
    read_nifti,
    read_pmj,
    require_same_grid,
    validate_rootlet_labels,
    volumes_equal,
    write_nifti,
)

_POSITIVE = "RAS"
_NEGATIVE = "LPI"


def _signed_permutation_affines():
    """All 48 axis-aligned affines with the code expected from the dominant-axis rule."""

    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            affine = np.zeros((4, 4))
            affine[3, 3] = 1.0
            letters = []
            for column, (axis, sign) in enumerate(zip(perm, signs, strict=True)):
                affine[axis, column] = sign * (0.5 + 0.25 * column)
                letters.append(_POSITIVE[axis] if sign > 0 else _NEGATIVE[axis])
            affine[:3, 3] = (-3.0, 7.5, 12.0)
            yield affine, "".join(letters)


def _sample_data(dtype, rng, shape=(3, 4, 5)):
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        return rng.integers(max(info.min, -1000), min(info.max, 1000), size=shape).astype(dtype)
    return rng.normal(0.0, 50.0, size=shape).astype(dtype)


def test_identity_affine_is_ras_and_flipped_is_lpi():
    assert orientation_of(np.eye(4)) == "RAS"
    assert orientation_of(np.diag([-1.0, -1.0, -1.0, 1.0])) == "LPI"


def test_orientation_of_matches_dominant_axis_oracle():
    for affine, expected in _signed_permutation_affines():
        assert orientation_of(affine) == expected


def test_orientation_of_rejects_singular_affine():
    with pytest.raises(GeometryError):
        orientation_of(np.diag([1.0, 0.0, 1.0, 1.0]))


@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
def test_round_trip_is_exact_for_all_supported_datatypes(tmp_path, suffix):
    rng = np.random.default_rng(7)
    affine = np.array(
        [[-0.8, 0.0, 0.0, 10.0], [0.0, 0.9, 0.0, -4.0], [0.0, 0.0, 1.2, 2.5], [0, 0, 0, 1]]
    )
    for code, dtype in SUPPORTED_DATATYPES.items():
        volume = Volume3D(_sample_data(dtype, rng), affine)
        back = read_nifti(write_nifti(volume, tmp_path / f"v{code}{suffix}"))
        assert back.data.dtype == dtype
        assert back.dims == volume.dims
        np.testing.assert_allclose(back.affine, affine, atol=1e-6)
        if np.issubdtype(dtype, np.integer):
            assert np.array_equal(back.data, volume.data)
        else:
            np.testing.assert_allclose(back.data, volume.data, rtol=0, atol=1e-6)


def test_round_trip_keeps_orientation_codes(tmp_path):
    rng = np.random.default_rng(3)
    for index, signs in enumerate(itertools.product((1.0, -1.0), repeat=3)):
        affine = np.diag([*(s * 0.8 for s in signs), 1.0])
        volume = Volume3D(rng.integers(0, 9, size=(4, 5, 6)).astype(np.int16), affine)
        back = read_nifti(write_nifti(volume, tmp_path / f"o{index}.nii.gz"))
        assert back.orientation == volume.orientation
        assert volumes_equal(back, volume)


def test_label_maps_are_stored_as_uint8_and_keep_label_set(tmp_path):
    data = np.zeros((4, 4, 4), dtype=np.int32)
    data[0, 0, 0] = 2
    data[3, 3, 3] = 8
    path = write_nifti(Volume3D(data, np.eye(4), label=True), tmp_path / "labels.nii.gz")
    back = read_nifti(path, label=True)
    assert back.data.dtype == np.uint8
    assert set(np.unique(back.data).tolist()) == {0, 2, 8}
    assert back.labels_present() == (2, 8)


def test_minimal_float_file_reads_dims_and_spacing(tmp_path):
    path = tmp_path / "tiny.nii"
    nib.save(nib.Nifti1Image(np.ones((2, 2, 2), dtype=np.float32), np.eye(4)), str(path))
    volume = read_nifti(path)
    assert volume.dims == (2, 2, 2)
    assert volume.spacing == (1.0, 1.0, 1.0)


def test_read_applies_slope_and_intercept(tmp_path):
    header = nib.Nifti1Header()
    header.set_data_shape((2, 2, 2))
    header.set_data_dtype(np.int16)
    header.set_slope_inter(2.0, 1.0)
    header.set_sform(np.eye(4), code=1)
    path = tmp_path / "scaled.nii"
    with path.open("wb") as handle:
        header.write_to(handle)
        handle.seek(352)
        handle.write(np.full((2, 2, 2), 3, dtype=np.int16).tobytes(order="F"))
    volume = read_nifti(path)
    assert np.all(volume.data == 7.0)


def test_bad_magic_is_a_format_error(tmp_path):
    path = tmp_path / "junk.nii"
    path.write_bytes(b"\x01" * 400)
    with pytest.raises(VolumeFormatError):
        read_nifti(path)


def test_gzip_garbage_is_a_format_error(tmp_path):
    path = tmp_path / "junk.nii.gz"
    path.write_bytes(b"not gzip at all" * 40)
    with pytest.raises(VolumeFormatError):
        read_nifti(path)


def test_truncated_header_and_data_are_io_errors(tmp_path):
    source = write_nifti(
        Volume3D(np.ones((8, 8, 8), dtype=np.float32), np.eye(4)), tmp_path / "full.nii"
    )
    raw = source.read_bytes()
    short_header = tmp_path / "short_header.nii"
    short_header.write_bytes(raw[:100])
    short_data = tmp_path / "short_data.nii"
    short_data.write_bytes(raw[:400])
    with pytest.raises(VolumeIOError):
        read_nifti(short_header)
    with pytest.raises(VolumeIOError):
        read_nifti(short_data)


def test_unsupported_datatype_is_rejected(tmp_path):
    path = tmp_path / "u32.nii"
    nib.save(nib.Nifti1Image(np.zeros((2, 2, 2), dtype=np.uint32), np.eye(4)), str(path))
    with pytest.raises(UnsupportedDatatypeError):
        read_nifti(path)


def test_missing_file_is_an_io_error(tmp_path):
    with pytest.raises(VolumeIOError):
        read_nifti(tmp_path / "absent.nii.gz")


def test_written_gzip_files_are_byte_stable(tmp_path):
    volume = Volume3D(np.arange(27, dtype=np.int16).reshape(3, 3, 3), np.eye(4))
    first = write_nifti(volume, tmp_path / "a" / "v.nii.gz").read_bytes()
    second = write_nifti(volume, tmp_path / "b" / "v.nii.gz").read_bytes()
    assert first == second
    assert gzip.decompress(first)[344:348] == b"n+1\x00"


def test_write_rejects_bad_suffix(tmp_path):
    with pytest.raises(ArgumentError):
        write_nifti(Volume3D(np.zeros((2, 2, 2)), np.eye(4)), tmp_path / "v.img")


def test_volume_rejects_empty_dims_and_fractional_labels():
    with pytest.raises(ContractError):
        Volume3D(np.zeros((0, 2, 2)), np.eye(4))
    with pytest.raises(ContractError):
        Volume3D(np.full((2, 2, 2), 0.5), np.eye(4), label=True)


def test_grid_mismatch_and_label_validation():
    a = Volume3D(np.zeros((4, 4, 4)), np.eye(4))
    b = Volume3D(np.zeros((4, 4, 5)), np.eye(4))
    with pytest.raises(ContractError):
        require_same_grid(a, b, what="test volumes")
    bad = np.zeros((4, 4, 4), dtype=np.uint8)
    bad[0, 0, 0] = 1
    with pytest.raises(ContractError):
        validate_rootlet_labels(Volume3D(bad, np.eye(4), label=True))


def test_voxel_physical_round_trip():
    affine = np.array([[0, 0, 1.5, 3.0], [-0.7, 0, 0, 1.0], [0, 2.0, 0, -5.0], [0, 0, 0, 1]])
    volume = Volume3D(np.zeros((3, 4, 5)), affine)
    ijk = np.array([1.0, 2.5, 3.0])
    np.testing.assert_allclose(volume.physical_to_voxel(volume.voxel_to_physical(ijk)), ijk)


def test_pmj_from_single_voxel_label():
    data = np.zeros((5, 5, 5), dtype=np.uint8)
    data[1, 2, 3] = 1
    affine = np.diag([0.5, 0.5, 2.0, 1.0])
    pmj = pmj_from_label(Volume3D(data, affine, label=True))
    assert pmj.xyz_mm == (0.5, 1.0, 6.0)
    assert pmj.flags == ()


def test_pmj_from_several_voxels_uses_centroid_and_flags():
    data = np.zeros((5, 5, 5), dtype=np.uint8)
    data[1, 1, 1] = 1
    data[3, 1, 1] = 1
    pmj = pmj_from_label(Volume3D(data, np.eye(4), label=True))
    assert pmj.xyz_mm == (2.0, 1.0, 1.0)
    assert pmj.flags == ("pmj:multiple_voxels",)


def test_pmj_from_empty_label_is_degenerate():
    with pytest.raises(DegenerateInputError):
        pmj_from_label(Volume3D(np.zeros((3, 3, 3), dtype=np.uint8), np.eye(4), label=True))


def test_pmj_json_accepts_mm_and_voxel_forms(tmp_path):
    mm = tmp_path / "pmj_mm.json"
    mm.write_text(json.dumps({"x_mm": 1.0, "y_mm": -2.0, "z_mm": 30.5}), encoding="utf-8")
    assert read_pmj(mm).xyz_mm == (1.0, -2.0, 30.5)

    voxel = tmp_path / "pmj_voxel.json"
    voxel.write_text(json.dumps({"voxel": [1, 2, 3]}), encoding="utf-8")
    reference = Volume3D(np.zeros((4, 4, 4)), np.diag([2.0, 2.0, 2.0, 1.0]))
    assert pmj_from_json(voxel, reference).xyz_mm == (2.0, 4.0, 6.0)
    with pytest.raises(ArgumentError):
        pmj_from_json(voxel)


def test_pmj_within_volume_bounds():
    volume = Volume3D(np.zeros((4, 4, 4)), np.eye(4))
    assert PmjPoint((1.0, 1.0, 3.4)).within(volume)
    assert not PmjPoint((1.0, 1.0, 9.0)).within(volume)


def test_vox_offset_is_checked_on_the_file_bytes(tmp_path):
    volume = Volume3D(np.arange(27, dtype=np.int16).reshape(3, 3, 3), np.eye(4))
    path = write_nifti(volume, tmp_path / "v.nii")
    raw = bytearray(path.read_bytes())
    assert np.frombuffer(bytes(raw[108:112]), dtype="<f4")[0] == 352.0
    assert volumes_equal(read_nifti(path), volume)

    raw[108:112] = np.array(0.0, dtype="<f4").tobytes()
    unset = tmp_path / "unset.nii"
    unset.write_bytes(bytes(raw))
    with pytest.raises(VolumeFormatError):
        read_nifti(unset)
