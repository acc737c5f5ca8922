"""Normalized per-pixel 3D coordinates and their lift to feature width.

Every cell ``(j, d, y, x)`` of a view's working-resolution grid gets the
triple ``(nw, nh, nd)``: pixel column and row positions normalized by the
image size, and the depth-bin value normalized by the depth range.  Pixel
positions and depth bins are evenly spaced and include both ends.  The view
index is not encoded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .anchors import axis_positions
from .errors import InvalidShape, ShapeMismatch
from .features import FeatureTensor, conv1x1
from .geometry import CameraView
from .layers import AffineMap

DEFAULT_DEPTH_RANGE = (1.0, 61.0)

PosEncoding = FeatureTensor


@dataclass(frozen=True)
class CoordBounds:
    """Raw (min, max) bounds for pixel column ``w``, row ``h`` and depth ``d``."""

    w: tuple[float, float]
    h: tuple[float, float]
    d: tuple[float, float] = DEFAULT_DEPTH_RANGE

    def __post_init__(self):
        for name in ("w", "h", "d"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo < hi:
                raise ValueError(f"{name} bounds must satisfy min < max, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))

    @classmethod
    def for_view(cls, view: CameraView, depth_range=DEFAULT_DEPTH_RANGE) -> "CoordBounds":
        return cls((0.0, float(view.width)), (0.0, float(view.height)), tuple(depth_range))


def _norm(x, lo: float, hi: float):
    return (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)


def _denorm(n, lo: float, hi: float):
    return np.asarray(n, dtype=np.float64) * (hi - lo) + lo


def normalize_coords(w, h, d, bounds: CoordBounds):
    """``(x - min) / (max - min)`` per component; accepts scalars or arrays."""
    return _norm(w, *bounds.w), _norm(h, *bounds.h), _norm(d, *bounds.d)


def denormalize_coords(nw, nh, nd, bounds: CoordBounds):
    return _denorm(nw, *bounds.w), _denorm(nh, *bounds.h), _denorm(nd, *bounds.d)


@dataclass(frozen=True)
class CoordVolume:
    """values: (views, D, H, W, 3) array of (nw, nh, nd)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 5 or v.shape[-1] != 3 or min(v.shape) < 1:
            raise InvalidShape(f"expected (views, D, H, W, 3), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(self.values.shape[:4])

    @property
    def depth_bins(self) -> int:
        return self.values.shape[1]


def build_coord_volume(
    views: Sequence[CameraView],
    depth_bins: int,
    height: int,
    width: int,
    depth_range=DEFAULT_DEPTH_RANGE,
) -> CoordVolume:
    """Normalized coordinates for a ``height x width`` grid on every view.

    Only the views' image sizes are read.
    """
    if depth_bins < 1 or height < 1 or width < 1:
        raise InvalidShape("depth_bins, height and width must be >= 1")
    out = np.empty((len(views), depth_bins, height, width, 3))
    for j, view in enumerate(views):
        b = CoordBounds.for_view(view, depth_range)
        nw, nh, nd = normalize_coords(
            axis_positions(*b.w, width), axis_positions(*b.h, height), axis_positions(*b.d, depth_bins), b
        )
        out[j, :, :, :, 0] = nw[np.newaxis, np.newaxis, :]
        out[j, :, :, :, 1] = nh[np.newaxis, :, np.newaxis]
        out[j, :, :, :, 2] = nd[:, np.newaxis, np.newaxis]
    return CoordVolume(out)


def positional_lift(depth_bins: int, channels: int, seed: int, bias: bool = True) -> AffineMap:
    return AffineMap.seeded(3 * depth_bins, channels, seed, "posenc", bias=bias)


def project_positional(
    vol: CoordVolume, channels: int, seed: int, lift: Optional[AffineMap] = None
) -> PosEncoding:
    """Per-pixel affine map from the flattened ``(D, 3)`` coordinates to ``channels``.

    Input index ``d * 3 + k`` holds component ``k`` of depth bin ``d``.
    """
    if channels < 1:
        raise InvalidShape("channels must be >= 1")
    v, D, H, W, _ = vol.values.shape
    lift = positional_lift(D, channels, seed) if lift is None else lift
    if (lift.in_dim, lift.out_dim) != (3 * D, channels):
        raise ShapeMismatch(f"lift maps {lift.in_dim}->{lift.out_dim}, expected {3 * D}->{channels}")
    # (V, D, H, W, 3) -> (V, D*3, H, W)
    stacked = vol.values.transpose(0, 1, 4, 2, 3).reshape(v, 3 * D, H, W)
    return FeatureTensor(conv1x1(stacked, lift))
