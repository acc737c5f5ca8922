"""Evenly tiled 3D anchors over the detection range, and their query vectors."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidSpec
from .geometry import GLOBAL, Box3D, SpaceRange
from .layers import AffineMap

ANCHOR_DIM = 7


@dataclass(frozen=True)
class AnchorSpec:
    """Anchor sizes ``(w, h, l)`` (read as ``lx, ly, lz``), yaws and grid counts."""

    sizes: tuple[tuple[float, float, float], ...] = ((4.0, 2.0, 1.5),)
    yaws: tuple[float, ...] = (0.0, math.pi / 2)
    counts: tuple[int, int, int] = (20, 20, 1)

    def __post_init__(self):
        try:
            sizes = tuple(tuple(float(v) for v in s) for s in self.sizes)
            yaws = tuple(float(y) for y in self.yaws)
            counts = tuple(int(c) for c in self.counts)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(str(exc)) from exc
        if not sizes or any(len(s) != 3 or not all(v > 0 and math.isfinite(v) for v in s) for s in sizes):
            raise InvalidSpec("sizes must be a non-empty list of positive (w, h, l)")
        if not yaws or not all(math.isfinite(y) for y in yaws):
            raise InvalidSpec("yaws must be a non-empty list of finite angles")
        if len(counts) != 3 or min(counts) < 1:
            raise InvalidSpec("counts must be three integers >= 1")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "yaws", yaws)
        object.__setattr__(self, "counts", counts)

    @property
    def num_anchors(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz * len(self.sizes) * len(self.yaws)


@dataclass(frozen=True)
class AnchorGrid:
    anchors: tuple[Box3D, ...]
    spec: AnchorSpec
    range: SpaceRange

    def __len__(self) -> int:
        return len(self.anchors)

    def as_array(self) -> np.ndarray:
        """(N, 7) array of (cx, cy, cz, lx, ly, lz, yaw)."""
        if not self.anchors:
            return np.zeros((0, ANCHOR_DIM))
        return np.stack([a.as_vector() for a in self.anchors])


@dataclass(frozen=True)
class QueryMatrix:
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


def axis_positions(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` evenly spaced positions including both ends; the midpoint if n == 1."""
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


def generate_anchor_grid(space_range: SpaceRange, spec: AnchorSpec) -> AnchorGrid:
    """Cross every grid center with every (size, yaw).

    Anchors are ordered x-major: x, then y, then z, then size, then yaw.
    """
    if not isinstance(spec, AnchorSpec):
        raise InvalidSpec("spec must be an AnchorSpec")
    axes = [axis_positions(lo, hi, n) for (lo, hi), n in zip(space_range.bounds(), spec.counts)]
    anchors = tuple(
        Box3D(x, y, z, w, h, l, yaw, frame=GLOBAL)
        for x, y, z, (w, h, l), yaw in itertools.product(*axes, spec.sizes, spec.yaws)
    )
    return AnchorGrid(anchors, spec, space_range)


def normalized_anchor_vectors(grid: AnchorGrid) -> np.ndarray:
    """(N, 7) rows with centers mapped to [0, 1] by the range; extents and yaw raw."""
    arr = grid.as_array()
    r = grid.range
    arr[:, :3] = (arr[:, :3] - r.lower) / r.span
    return arr


def query_lift(dim: int, seed: int) -> AffineMap:
    return AffineMap.seeded(ANCHOR_DIM, dim, seed, "queries")


def anchors_to_queries(
    grid: AnchorGrid, dim: int, seed: int, lift: Optional[AffineMap] = None
) -> QueryMatrix:
    """Lift each anchor's normalized 7-vector to ``dim`` with a seeded affine map.

    Pass ``lift`` to override the seeded map (e.g. ``AffineMap.identity(7)``).
    """
    if dim < ANCHOR_DIM:
        raise InvalidSpec(f"query dim must be >= {ANCHOR_DIM}")
    lift = query_lift(dim, seed) if lift is None else lift
    if (lift.in_dim, lift.out_dim) != (ANCHOR_DIM, dim):
        raise InvalidSpec(f"lift maps {lift.in_dim}->{lift.out_dim}, expected {ANCHOR_DIM}->{dim}")
    return QueryMatrix(lift(normalized_anchor_vectors(grid)))


def anchors_to_doc(grid: AnchorGrid) -> dict:
    """Scene-style box JSON for inspection."""
    r = grid.range
    return {
        "space_range": {"x": [r.x_min, r.x_max], "y": [r.y_min, r.y_max], "z": [r.z_min, r.z_max]},
        "counts": list(grid.spec.counts),
        "num_anchors": len(grid),
        "boxes": [
            {"c": [a.cx, a.cy, a.cz], "e": [a.lx, a.ly, a.lz], "yaw": a.yaw, "v": None, "attr": None, "label": "anchor"}
            for a in grid.anchors
        ],
    }


def parse_sizes(values: Sequence[str]) -> tuple[tuple[float, float, float], ...]:
    """Parse ``"w,h,l"`` strings."""
    out = []
    for v in values:
        parts = v.split(",")
        if len(parts) != 3:
            raise InvalidSpec(f"size {v!r} is not w,h,l")
        out.append(tuple(float(p) for p in parts))
    return tuple(out)
