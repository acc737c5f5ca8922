"""Dense feature tensors, the MMT0 fixture format and multi-level fusion.

Fusion works at the 1/4 working resolution: for pyramid level ``i`` the
levels ``i..3`` are upsampled (nearest neighbour) to H/4 x W/4 and
concatenated along channels, a 1x1 map reduces them to ``out_channels``,
and the four reduced maps are summed.  Downstream shapes (positional
encoding, head) use that working resolution.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidFactor, InvalidShape, SchemaError, ShapeMismatch
from .layers import AffineMap

MAGIC = b"MMT0"
HEADER = struct.Struct("<4sI4I")  # magic, rank, 4 dims: 24 bytes
NUM_LEVELS = 4
NUM_VIEWS = 6
DEFAULT_CHANNELS = 64


@dataclass(frozen=True)
class FeatureTensor:
    """(views, channels, height, width) float64 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise InvalidShape(f"expected 4 dims (views, channels, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise InvalidShape(f"empty dimension in shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature tensor contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(self.data.shape)

    @property
    def views(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    def __eq__(self, other):
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class PyramidLevels:
    """Four levels at H/4, H/8, H/16, H/32 (widths likewise), equal channels."""

    levels: tuple[FeatureTensor, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if len(levels) != NUM_LEVELS:
            raise ShapeMismatch(f"expected {NUM_LEVELS} levels, got {len(levels)}")
        v0, c0, h0, w0 = levels[0].shape
        if h0 % 8 or w0 % 8:
            raise ShapeMismatch(f"finest level {h0}x{w0} is not H/4 x W/4 of a size divisible by 32")
        for i, t in enumerate(levels):
            expected = (v0, c0, h0 >> i, w0 >> i)
            if t.shape != expected:
                raise ShapeMismatch(f"level {i} has shape {t.shape}, expected {expected}")
        object.__setattr__(self, "levels", levels)

    def __getitem__(self, i: int) -> FeatureTensor:
        return self.levels[i]

    def __iter__(self):
        return iter(self.levels)

    @property
    def input_size(self) -> tuple[int, int]:
        """The (H, W) image size the pyramid corresponds to."""
        return 4 * self.levels[0].height, 4 * self.levels[0].width

    @property
    def channels(self) -> int:
        return self.levels[0].channels


def upsample(t: FeatureTensor, factor: int) -> FeatureTensor:
    """Nearest-neighbour upsampling of H and W by ``factor`` (1 is a no-op)."""
    if factor == 1:
        return t
    if factor not in (2, 4, 8):
        raise InvalidFactor(f"factor must be 2, 4 or 8, got {factor}")
    return FeatureTensor(np.repeat(np.repeat(t.data, factor, axis=2), factor, axis=3))


def conv1x1(x: np.ndarray, fmap: AffineMap) -> np.ndarray:
    """Apply an affine map over the channel axis of a (V, C, H, W) array."""
    v, c, h, w = x.shape
    if c != fmap.in_dim:
        raise ShapeMismatch(f"map expects {fmap.in_dim} channels, got {c}")
    flat = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, c)
    out = fmap(flat).reshape(v, h, w, fmap.out_dim)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def fusion_maps(
    channels: int, seed: int, out_channels: int = DEFAULT_CHANNELS, bias: bool = False
) -> tuple[AffineMap, ...]:
    """Seeded 1x1 maps; level ``i`` takes ``channels * (4 - i)`` inputs."""
    return tuple(
        AffineMap.seeded(channels * (NUM_LEVELS - i), out_channels, seed, "fusion", i, bias=bias)
        for i in range(NUM_LEVELS)
    )


def identity_fusion(channels: int, out_channels: Optional[int] = None) -> tuple[AffineMap, ...]:
    """Maps that keep only level ``i``'s own channels from its concatenation."""
    out_channels = channels if out_channels is None else out_channels
    return tuple(AffineMap.identity(channels * (NUM_LEVELS - i), out_channels) for i in range(NUM_LEVELS))


def zero_fusion(channels: int, out_channels: int = DEFAULT_CHANNELS) -> tuple[AffineMap, ...]:
    return tuple(AffineMap.zeros(channels * (NUM_LEVELS - i), out_channels) for i in range(NUM_LEVELS))


def fuse_multilevel(
    levels: PyramidLevels, seed: int, fusion: Optional[Sequence[AffineMap]] = None
) -> FeatureTensor:
    """Fuse the pyramid into one (views, 64, H/4, W/4) tensor."""
    if not isinstance(levels, PyramidLevels):
        levels = PyramidLevels(tuple(levels))
    fusion = fusion_maps(levels.channels, seed) if fusion is None else tuple(fusion)
    if len(fusion) != NUM_LEVELS:
        raise ShapeMismatch(f"need {NUM_LEVELS} fusion maps")
    up = [upsample(t, 1 << i).data for i, t in enumerate(levels)]
    total = None
    for i in range(NUM_LEVELS):
        cat = np.concatenate(up[i:], axis=1)
        fused = conv1x1(cat, fusion[i])
        total = fused if total is None else total + fused
    return FeatureTensor(total)


def combine_features(f2d: FeatureTensor, pe: FeatureTensor) -> FeatureTensor:
    """3D-aware features: elementwise sum of 2D features and positional encoding."""
    if f2d.shape != pe.shape:
        raise ShapeMismatch(f"feature shape {f2d.shape} != encoding shape {pe.shape}")
    return FeatureTensor(f2d.data + pe.data)


# -- MMT0 fixture format -------------------------------------------------------


def tensor_to_bytes(t: FeatureTensor) -> bytes:
    """24-byte header (``MMT0``, u32 rank, 4 x u32 dims) + little-endian f32 payload."""
    header = HEADER.pack(MAGIC, 4, *t.shape)
    return header + t.data.astype("<f4").tobytes(order="C")


def read_tensor(fh: BinaryIO) -> Optional[FeatureTensor]:
    """Read one tensor; ``None`` at a clean end of stream."""
    raw = fh.read(HEADER.size)
    if not raw:
        return None
    if len(raw) != HEADER.size:
        raise SchemaError("mmt0.header", "truncated header")
    magic, rank, *dims = HEADER.unpack(raw)
    if magic != MAGIC:
        raise SchemaError("mmt0.magic", f"bad magic {magic!r}")
    if not 1 <= rank <= 4:
        raise SchemaError("mmt0.rank", f"unsupported rank {rank}")
    if any(d != 1 for d in dims[rank:]):
        raise SchemaError("mmt0.dims", "unused dims must be 1")
    n = int(np.prod(dims))
    payload = fh.read(4 * n)
    if len(payload) != 4 * n:
        raise SchemaError("mmt0.payload", f"expected {4 * n} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims[:rank])
    while data.ndim < 4:
        data = data[np.newaxis]
    return FeatureTensor(data)


def tensors_from_bytes(data: bytes) -> list[FeatureTensor]:
    fh = io.BytesIO(data)
    out = []
    while (t := read_tensor(fh)) is not None:
        out.append(t)
    return out


def pyramid_to_bytes(levels: PyramidLevels) -> bytes:
    return b"".join(tensor_to_bytes(t) for t in levels)


def pyramid_from_bytes(data: bytes) -> PyramidLevels:
    return PyramidLevels(tuple(tensors_from_bytes(data)))


def as_f32_exact(levels: Iterable[FeatureTensor]) -> tuple[FeatureTensor, ...]:
    """Round tensors through float32 so in-memory values equal a saved fixture."""
    return tuple(FeatureTensor(t.data.astype(np.float32).astype(np.float64)) for t in levels)
