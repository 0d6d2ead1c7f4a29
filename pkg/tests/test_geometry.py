import math

import numpy as np
import pytest

from rootlet_levels.exceptions import ArgumentError, DegenerateInputError, GeometryError, RangeError
from rootlet_levels.geometry import (
    arc_length_between,
    extract_centerline,
    pmj_distance,
    superior_sign,
)
from rootlet_levels.phantom import PhantomSpec, generate_phantom
from rootlet_levels.volume_io import PmjPoint, Volume3D

SPACING = 0.8


def _cylinder(dims=(33, 33, 80), center=(16, 16), radius=3, slices=(10, 69), affine=None):
    i, j = np.meshgrid(np.arange(dims[0]), np.arange(dims[1]), indexing="ij")
    disk = (i - center[0]) ** 2 + (j - center[1]) ** 2 <= radius**2
    data = np.zeros(dims, dtype=np.uint8)
    data[:, :, slices[0] : slices[1] + 1] = disk[:, :, None]
    if affine is None:
        affine = np.diag([SPACING, SPACING, SPACING, 1.0])
    return Volume3D(data, affine, label=True)


def test_straight_cylinder_has_exact_arc_length():
    cl = extract_centerline(_cylinder())
    assert cl.first_slice == 10 and cl.last_slice == 69
    np.testing.assert_allclose(cl.points_mm[:, :2], 16 * SPACING)
    assert abs(cl.length_mm - 59 * SPACING) < 1e-9
    np.testing.assert_allclose(cl.arc_mm, np.arange(60) * SPACING, atol=1e-9)


def test_translated_cylinder_translates_the_centerline():
    base = extract_centerline(_cylinder())
    moved = extract_centerline(_cylinder(center=(21, 16)))
    np.testing.assert_allclose(moved.points_mm - base.points_mm, [[5 * SPACING, 0.0, 0.0]] * 60)
    np.testing.assert_allclose(moved.arc_mm, base.arc_mm)


def test_arc_steps_equal_point_distances():
    spec = PhantomSpec(curve="bowed", amplitude_mm=4.0)
    cl = extract_centerline(generate_phantom(spec).cord, window=5)
    steps = np.linalg.norm(np.diff(cl.points_mm, axis=0), axis=1)
    np.testing.assert_allclose(np.diff(cl.arc_mm), steps, rtol=0, atol=1e-9)
    assert np.all(np.diff(cl.slices) == 1)
    assert cl.length_mm >= (len(cl.slices) - 1) * SPACING


@pytest.mark.parametrize("spacing,radius", [(0.8, 4.0), (1.0, 10.0)])
def test_helix_length_matches_closed_form(spacing, radius):
    spec = PhantomSpec(
        dims=(64, 64, 160),
        spacing=(spacing, spacing, spacing),
        curve="helical",
        helix_radius_mm=radius,
        pitch_mm=40.0,
        cord_radius_mm=3.5,
    )
    cl = extract_centerline(generate_phantom(spec).cord, window=1)
    height = (cl.last_slice - cl.first_slice) * spacing
    expected = height * math.hypot(1.0, 2.0 * math.pi * radius / 40.0)
    assert expected == pytest.approx(spec.arc_mm(cl.first_slice, cl.last_slice), rel=1e-9)
    assert abs(cl.length_mm - expected) / expected < 0.015


def test_window_one_reproduces_raw_centroids():
    spec = PhantomSpec(curve="bowed", amplitude_mm=3.0)
    cord = generate_phantom(spec).cord
    cl = extract_centerline(cord, window=1)
    mask = np.asarray(cord.data, dtype=bool)
    for row, k in enumerate(cl.slices[::17]):
        ii, jj = np.nonzero(mask[:, :, k])
        expected = cord.voxel_to_physical([ii.mean(), jj.mean(), k])
        np.testing.assert_allclose(cl.points_mm[row * 17], expected, atol=1e-9)


def test_gaps_are_interpolated_and_flagged():
    cord = _cylinder()
    data = np.array(cord.data)
    data[:, :, 30:33] = 0
    cl = extract_centerline(cord.with_data(data))
    assert len(cl.slices) == 60
    assert cl.flags == ("centerline:gaps_interpolated",)
    assert abs(cl.length_mm - 59 * SPACING) < 1e-9


def test_centerline_errors():
    empty = Volume3D(np.zeros((8, 8, 8), dtype=np.uint8), np.eye(4), label=True)
    with pytest.raises(DegenerateInputError):
        extract_centerline(empty)
    with pytest.raises(GeometryError):
        extract_centerline(_cylinder(slices=(12, 12)))
    with pytest.raises(ArgumentError):
        extract_centerline(_cylinder(), window=4)


def test_superior_sign_follows_the_slice_axis():
    assert superior_sign(np.eye(4)) == 1
    assert superior_sign(np.diag([-1.0, -1.0, -1.0, 1.0])) == -1
    swapped = np.array([[0, 0, 1.0, 0], [0, 1.0, 0, 0], [1.0, 0, 0, 0], [0, 0, 0, 1]])
    with pytest.raises(GeometryError):
        superior_sign(swapped)


def test_arc_length_between_slices():
    cl = extract_centerline(_cylinder(slices=(0, 79)))
    assert arc_length_between(cl, 33, 33).mm == 0.0
    assert arc_length_between(cl, 20, 60).mm == pytest.approx(32.0, abs=1e-9)
    assert arc_length_between(cl, 60, 20).mm == pytest.approx(32.0, abs=1e-9)


def test_queries_beyond_the_cord_clamp_and_outside_the_volume_raise():
    cl = extract_centerline(_cylinder())
    distance = arc_length_between(cl, 5, 20)
    assert distance.clamped
    assert distance.mm == pytest.approx(10 * SPACING)
    with pytest.raises(RangeError):
        arc_length_between(cl, 0, 80)
    with pytest.raises(RangeError):
        arc_length_between(cl, -1, 10)


def test_pmj_on_rostral_endpoint():
    cord = _cylinder(slices=(10, 69))
    cl = extract_centerline(cord)
    pmj = PmjPoint.from_voxel((16, 16, 69), cord.affine)
    assert pmj_distance(cl, pmj, 19).mm == pytest.approx(40.0, abs=1e-6)
    assert pmj_distance(cl, pmj, 69).mm == pytest.approx(0.0, abs=1e-9)


def test_pmj_at_target_slice_is_zero():
    cord = _cylinder()
    cl = extract_centerline(cord)
    pmj = PmjPoint(tuple(cl.point_at(40)))
    assert pmj_distance(cl, pmj, 40).mm == pytest.approx(0.0, abs=1e-9)


def test_pmj_rostral_of_the_cord_adds_the_gap():
    cord = _cylinder(slices=(10, 69))
    cl = extract_centerline(cord)
    top = cl.point_at(69)
    pmj = PmjPoint(tuple(top + np.array([0.0, 0.0, 2.0])))
    for k in (10, 35, 69):
        expected = (69 - k) * SPACING + 2.0
        assert pmj_distance(cl, pmj, k).mm == pytest.approx(expected, abs=1e-6)


def test_pmj_distance_is_lipschitz_in_the_slice():
    spec = PhantomSpec(curve="bowed", amplitude_mm=4.0)
    phantom = generate_phantom(spec)
    cl = extract_centerline(phantom.cord)
    distances = [pmj_distance(cl, phantom.pmj, int(k)).mm for k in cl.slices]
    steps = np.abs(np.diff(distances))
    np.testing.assert_allclose(steps, np.diff(cl.arc_mm), atol=1e-9)


def test_flipped_volume_gives_the_same_length():
    cord = _cylinder()
    flipped_affine = np.array(cord.affine)
    flipped_affine[2, 2] = -SPACING
    flipped_affine[2, 3] = 79 * SPACING
    flipped = Volume3D(np.array(cord.data)[:, :, ::-1], flipped_affine, label=True)
    cl = extract_centerline(flipped)
    assert cl.superior_sign == -1
    assert cl.length_mm == pytest.approx(extract_centerline(cord).length_mm, abs=1e-9)


def test_centerline_rows_have_the_csv_columns():
    rows = extract_centerline(_cylinder()).to_rows()
    assert list(rows[0]) == ["slice_index", "x_mm", "y_mm", "z_mm", "cumulative_mm"]
    assert rows[0]["cumulative_mm"] == 0.0
