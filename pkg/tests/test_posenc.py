import numpy as np
import pytest
from hypothesis import given, strategies as st

from mm3d.errors import InvalidShape, ShapeMismatch
from mm3d.layers import AffineMap
from mm3d.posenc import (
    CoordBounds,
    build_coord_volume,
    denormalize_coords,
    normalize_coords,
    project_positional,
)

BOUNDS = CoordBounds((0.0, 704.0), (0.0, 256.0), (1.0, 61.0))


def test_normalize_example():
    nw, nh, nd = normalize_coords(176, 128, 31, BOUNDS)
    assert (float(nw), float(nh), float(nd)) == (0.25, 0.5, 0.5)


def test_corners():
    lo = normalize_coords(0, 0, 1, BOUNDS)
    hi = normalize_coords(704, 256, 61, BOUNDS)
    assert [float(x) for x in lo] == [0.0, 0.0, 0.0]
    assert [float(x) for x in hi] == [1.0, 1.0, 1.0]


@given(st.floats(0, 704), st.floats(0, 256), st.floats(1, 61))
def test_round_trip(w, h, d):
    back = denormalize_coords(*normalize_coords(w, h, d, BOUNDS), BOUNDS)
    np.testing.assert_allclose([float(x) for x in back], [w, h, d], rtol=0, atol=1e-12)


def test_bounds_must_be_ordered():
    with pytest.raises(ValueError):
        CoordBounds((1.0, 1.0), (0.0, 1.0))


def test_volume_shape_and_axes(views):
    vol = build_coord_volume(views, 3, 4, 5)
    assert vol.values.shape == (6, 3, 4, 5, 3)
    v = vol.values[2]
    np.testing.assert_array_equal(v[0, 0, :, 0], np.linspace(0, 1, 5))
    np.testing.assert_array_equal(v[0, :, 0, 1], np.linspace(0, 1, 4))
    np.testing.assert_array_equal(v[:, 0, 0, 2], [0.0, 0.5, 1.0])


def test_volume_rejects_empty(views):
    with pytest.raises(InvalidShape):
        build_coord_volume(views, 0, 4, 4)


def test_identity_lift_copies_coordinates(views):
    vol = build_coord_volume(views, 2, 3, 4)
    pe = project_positional(vol, 6, seed=0, lift=AffineMap.identity(6))
    assert pe.shape == (6, 6, 3, 4)
    # channel d*3 + k holds component k of depth bin d
    np.testing.assert_array_equal(pe.data[:, 4], vol.values[:, 1, :, :, 1])
    np.testing.assert_array_equal(pe.data[:, 2], vol.values[:, 0, :, :, 2])


def test_zero_lift(views):
    vol = build_coord_volume(views, 2, 3, 4)
    pe = project_positional(vol, 8, seed=0, lift=AffineMap.zeros(6, 8))
    assert not pe.data.any()


def test_lift_shape_checked(views):
    vol = build_coord_volume(views, 2, 3, 4)
    with pytest.raises(ShapeMismatch):
        project_positional(vol, 8, seed=0, lift=AffineMap.zeros(5, 8))


def test_seeded_lift_reproducible(views):
    vol = build_coord_volume(views, 4, 4, 11)
    a = project_positional(vol, 64, seed=2)
    assert a == project_positional(vol, 64, seed=2)
    assert a.shape == (6, 64, 4, 11)
