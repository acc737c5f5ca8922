import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from mm3d.anchors import (
    AnchorSpec,
    anchors_to_queries,
    axis_positions,
    generate_anchor_grid,
    normalized_anchor_vectors,
    parse_sizes,
)
from mm3d.errors import InvalidSpec
from mm3d.geometry import SpaceRange
from mm3d.layers import AffineMap

UNIT = SpaceRange(-1, 1, -1, 1, -1, 1)


def test_three_per_axis():
    grid = generate_anchor_grid(UNIT, AnchorSpec(((1, 1, 1),), (0.0,), (3, 1, 1)))
    assert [a.cx for a in grid.anchors] == [-1.0, 0.0, 1.0]
    assert {(a.cy, a.cz) for a in grid.anchors} == {(0.0, 0.0)}


def test_single_count_is_midpoint():
    assert axis_positions(-3.0, 5.0, 1).tolist() == [1.0]


def test_count_and_order():
    spec = AnchorSpec(((4, 2, 1.5), (1, 1, 2)), (0.0, math.pi / 2), (2, 2, 2))
    grid = generate_anchor_grid(UNIT, spec)
    assert len(grid) == spec.num_anchors == 32
    # yaw varies fastest, then size, then z
    assert [a.yaw for a in grid.anchors[:2]] == [0.0, math.pi / 2]
    assert grid.anchors[2].lx == 1.0
    assert grid.anchors[4].cz == 1.0 and grid.anchors[0].cz == -1.0


def test_default_spec():
    grid = generate_anchor_grid(SpaceRange(), AnchorSpec())
    assert len(grid) == 20 * 20 * 1 * 1 * 2
    assert all(a.cz == 0.0 for a in grid.anchors)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sizes": ()},
        {"sizes": ((1, -1, 1),)},
        {"sizes": ((1, 1),)},
        {"yaws": ()},
        {"yaws": (float("nan"),)},
        {"counts": (0, 1, 1)},
        {"counts": (1, 1)},
    ],
)
def test_invalid_spec(kwargs):
    with pytest.raises(InvalidSpec):
        AnchorSpec(**kwargs)


def test_parse_sizes():
    assert parse_sizes(["4,2,1.5"]) == ((4.0, 2.0, 1.5),)
    with pytest.raises(InvalidSpec):
        parse_sizes(["4,2"])


def test_identity_lift_gives_normalized_anchor():
    grid = generate_anchor_grid(UNIT, AnchorSpec(((4, 2, 1.5),), (0.3,), (3, 1, 1)))
    q = anchors_to_queries(grid, 7, seed=0, lift=AffineMap.identity(7))
    np.testing.assert_array_equal(q.values[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(q.values[0, 3:], [4, 2, 1.5, 0.3])


def test_queries_reproducible_and_seed_dependent():
    grid = generate_anchor_grid(SpaceRange(), AnchorSpec(counts=(4, 4, 1)))
    a = anchors_to_queries(grid, 64, seed=3).values
    assert a.shape == (32, 64)
    assert a.tobytes() == anchors_to_queries(grid, 64, seed=3).values.tobytes()
    assert not np.array_equal(a, anchors_to_queries(grid, 64, seed=4).values)


def test_distinct_anchors_give_distinct_queries():
    grid = generate_anchor_grid(SpaceRange(), AnchorSpec(((4, 2, 1.5), (1, 1, 1)), (0.0, 1.0), (5, 5, 2)))
    q = anchors_to_queries(grid, 16, seed=1).values
    assert len({row.tobytes() for row in q}) == len(grid)


def test_query_dim_too_small():
    grid = generate_anchor_grid(UNIT, AnchorSpec(counts=(1, 1, 1)))
    with pytest.raises(InvalidSpec):
        anchors_to_queries(grid, 6, seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_normalized_centers_in_unit_cube(nx, ny, nz, ns, ny_):
    spec = AnchorSpec(tuple((1.0 + i, 1.0, 1.0) for i in range(ns)), tuple(0.1 * i for i in range(ny_)), (nx, ny, nz))
    v = normalized_anchor_vectors(generate_anchor_grid(SpaceRange(), spec))
    assert v.shape == (spec.num_anchors, 7)
    assert v[:, :3].min() >= 0 and v[:, :3].max() <= 1
