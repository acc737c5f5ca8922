"""Attention detection head: one encoder layer over the 3D-aware features, one
decoder layer driven by anchor queries, and box/class prediction branches.

Box regression is residual on the query's anchor: center offsets are in
range-normalized units, extents are ``anchor * exp(residual)`` and yaw is
additive.  With zero residuals the prediction is the anchor itself, bit for
bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anchors import ANCHOR_DIM, AnchorGrid, anchors_to_queries, query_lift, QueryMatrix
from .datasets import UNIFIED_CLASSES
from .errors import ShapeMismatch
from .features import (
    FeatureTensor,
    PyramidLevels,
    combine_features,
    fuse_multilevel,
    fusion_maps,
    zero_fusion,
)
from .geometry import Box3D, CameraView
from .layers import AffineMap, FeedForward
from .posenc import DEFAULT_DEPTH_RANGE, build_coord_volume, positional_lift, project_positional

# exp() of larger residuals would overflow or underflow extents to inf / 0.
MAX_LOG_SCALE = 20.0


@dataclass(frozen=True)
class HeadConfig:
    embed_dim: int = 64
    num_heads: int = 1
    class_names: tuple[str, ...] = UNIFIED_CLASSES
    seed: int = 0
    scaled: bool = True  # divide logits by sqrt(head dim)
    init: str = "seeded"  # or "zero": every weight and bias is 0
    ffn_dim: int = 128
    depth_bins: int = 4
    depth_range: tuple[float, float] = DEFAULT_DEPTH_RANGE

    def __post_init__(self):
        if self.embed_dim < ANCHOR_DIM:
            raise ValueError(f"embed_dim must be >= {ANCHOR_DIM}")
        if self.num_heads < 1 or self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.init not in ("seeded", "zero"):
            raise ValueError(f"unknown init {self.init!r}")
        if not self.class_names:
            raise ValueError("class_names must not be empty")
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "depth_range", tuple(float(v) for v in self.depth_range))

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class AttentionBlock:
    q: AffineMap
    k: AffineMap
    v: AffineMap
    o: AffineMap
    ff: FeedForward

    @classmethod
    def seeded(cls, dim: int, ffn_dim: int, seed: int, name: str) -> "AttentionBlock":
        return cls(
            *(AffineMap.seeded(dim, dim, seed, name, part) for part in ("q", "k", "v", "o")),
            FeedForward.seeded(dim, ffn_dim, seed, name, "ff"),
        )

    @classmethod
    def zeros(cls, dim: int, ffn_dim: int) -> "AttentionBlock":
        return cls(*(AffineMap.zeros(dim, dim) for _ in range(4)), FeedForward.zeros(dim, ffn_dim))


@dataclass(frozen=True)
class HeadWeights:
    encoder: AttentionBlock
    decoder: AttentionBlock
    bbox: AffineMap
    cls: AffineMap

    @classmethod
    def seeded(cls, cfg: HeadConfig) -> "HeadWeights":
        d = cfg.embed_dim
        return cls(
            AttentionBlock.seeded(d, cfg.ffn_dim, cfg.seed, "encoder"),
            AttentionBlock.seeded(d, cfg.ffn_dim, cfg.seed, "decoder"),
            AffineMap.seeded(d, ANCHOR_DIM, cfg.seed, "bbox"),
            AffineMap.seeded(d, cfg.num_classes, cfg.seed, "cls"),
        )

    @classmethod
    def zeros(cls, cfg: HeadConfig) -> "HeadWeights":
        d = cfg.embed_dim
        return cls(
            AttentionBlock.zeros(d, cfg.ffn_dim),
            AttentionBlock.zeros(d, cfg.ffn_dim),
            AffineMap.zeros(d, ANCHOR_DIM),
            AffineMap.zeros(d, cfg.num_classes),
        )

    @classmethod
    def for_config(cls, cfg: HeadConfig) -> "HeadWeights":
        return cls.zeros(cfg) if cfg.init == "zero" else cls.seeded(cfg)


@dataclass(frozen=True)
class DetectionResult:
    boxes: tuple[Box3D, ...]
    scores: np.ndarray  # (n_queries, n_classes), rows sum to 1
    query_ids: tuple[int, ...]
    class_names: tuple[str, ...] = UNIFIED_CLASSES

    def __len__(self) -> int:
        return len(self.boxes)

    def labels(self) -> list[tuple[str, float]]:
        """Top class and its probability per query (first index wins ties)."""
        idx = np.argmax(self.scores, axis=1)
        return [(self.class_names[i], float(self.scores[q, i])) for q, i in enumerate(idx)]


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def attention_weights(Q: np.ndarray, K: np.ndarray, scaled: bool = True) -> np.ndarray:
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if Q.ndim != 2 or K.ndim != 2 or Q.shape[1] != K.shape[1]:
        raise ShapeMismatch(f"Q {Q.shape} and K {K.shape} do not share a feature dim")
    logits = Q @ K.T
    if scaled:
        logits = logits / math.sqrt(Q.shape[1])
    return softmax(logits, axis=1)


def attention(Q, K, V, scaled: bool = True) -> np.ndarray:
    """``softmax(Q K^T / sqrt(d)) V`` with a row-wise softmax."""
    V = np.asarray(V, dtype=np.float64)
    K = np.asarray(K)
    if V.ndim != 2 or V.shape[0] != K.shape[0]:
        raise ShapeMismatch(f"K has {K.shape[0]} rows but V has shape {V.shape}")
    return attention_weights(Q, K, scaled) @ V


def multi_head_attention(
    x_q: np.ndarray, x_kv: np.ndarray, block: AttentionBlock, num_heads: int, scaled: bool = True
) -> np.ndarray:
    q, k, v = block.q(x_q), block.k(x_kv), block.v(x_kv)
    d = q.shape[1]
    hd = d // num_heads
    heads = [
        attention(q[:, h * hd:(h + 1) * hd], k[:, h * hd:(h + 1) * hd], v[:, h * hd:(h + 1) * hd], scaled)
        for h in range(num_heads)
    ]
    return block.o(np.concatenate(heads, axis=1))


def _layer(x_q, x_kv, block: AttentionBlock, cfg: HeadConfig) -> np.ndarray:
    h = x_q + multi_head_attention(x_q, x_kv, block, cfg.num_heads, cfg.scaled)
    return h + block.ff(h)


def flatten_features(f3d: FeatureTensor) -> np.ndarray:
    """(V, C, H, W) -> (V*H*W, C), view-major then row-major."""
    v, c, h, w = f3d.shape
    return np.ascontiguousarray(f3d.data.transpose(0, 2, 3, 1)).reshape(v * h * w, c)


def encode(f3d: FeatureTensor, weights: HeadWeights, cfg: HeadConfig) -> np.ndarray:
    """One self-attention layer + feed-forward over all view pixels."""
    if f3d.channels != cfg.embed_dim:
        raise ShapeMismatch(f"feature channels {f3d.channels} != embed_dim {cfg.embed_dim}")
    x = flatten_features(f3d)
    return _layer(x, x, weights.encoder, cfg)


def decode(queries: QueryMatrix, memory: np.ndarray, weights: HeadWeights, cfg: HeadConfig) -> np.ndarray:
    """Anchor queries cross-attend to the encoder memory, then feed-forward."""
    q = queries.values if isinstance(queries, QueryMatrix) else np.asarray(queries, dtype=np.float64)
    if q.shape[1] != cfg.embed_dim or memory.shape[1] != cfg.embed_dim:
        raise ShapeMismatch(f"queries {q.shape} / memory {memory.shape} vs embed_dim {cfg.embed_dim}")
    return _layer(q, memory, weights.decoder, cfg)


def decode_boxes(anchors: AnchorGrid, residuals: np.ndarray) -> tuple[Box3D, ...]:
    r = np.asarray(residuals, dtype=np.float64)
    if r.shape != (len(anchors), ANCHOR_DIM):
        raise ShapeMismatch(f"residuals {r.shape} for {len(anchors)} anchors")
    span = anchors.range.span
    out = []
    for a, res in zip(anchors.anchors, r):
        dc = res[:3] * span
        scale = np.exp(np.clip(res[3:6], -MAX_LOG_SCALE, MAX_LOG_SCALE))
        out.append(
            Box3D(
                a.cx + dc[0], a.cy + dc[1], a.cz + dc[2],
                a.lx * scale[0], a.ly * scale[1], a.lz * scale[2],
                a.yaw + res[6],
                frame=a.frame,
            )
        )
    return tuple(out)


def predict_heads(
    decoded: np.ndarray, anchors: AnchorGrid, weights: HeadWeights, cfg: HeadConfig
) -> DetectionResult:
    decoded = np.asarray(decoded, dtype=np.float64)
    boxes = decode_boxes(anchors, weights.bbox(decoded))
    scores = softmax(weights.cls(decoded), axis=1)
    return DetectionResult(boxes, scores, tuple(range(len(boxes))), cfg.class_names)


@dataclass(frozen=True)
class ForwardModel:
    """Every map the forward pass uses, built once from a config."""

    cfg: HeadConfig
    fusion: tuple[AffineMap, ...]
    pos_lift: AffineMap
    q_lift: AffineMap
    weights: HeadWeights = field(repr=False)

    @classmethod
    def build(cls, cfg: HeadConfig, channels: int = 64) -> "ForwardModel":
        d = cfg.embed_dim
        if cfg.init == "zero":
            return cls(
                cfg,
                zero_fusion(channels, d),
                AffineMap.zeros(3 * cfg.depth_bins, d),
                AffineMap.zeros(ANCHOR_DIM, d),
                HeadWeights.zeros(cfg),
            )
        return cls(
            cfg,
            fusion_maps(channels, cfg.seed, d),
            positional_lift(cfg.depth_bins, d, cfg.seed),
            query_lift(d, cfg.seed),
            HeadWeights.seeded(cfg),
        )

    def __call__(self, levels: PyramidLevels, views: Sequence[CameraView], anchors: AnchorGrid) -> DetectionResult:
        cfg = self.cfg
        f2d = fuse_multilevel(levels, cfg.seed, self.fusion)
        vol = build_coord_volume(views, cfg.depth_bins, f2d.height, f2d.width, cfg.depth_range)
        pe = project_positional(vol, cfg.embed_dim, cfg.seed, self.pos_lift)
        f3d = combine_features(f2d, pe)
        memory = encode(f3d, self.weights, cfg)
        queries = anchors_to_queries(anchors, cfg.embed_dim, cfg.seed, self.q_lift)
        decoded = decode(queries, memory, self.weights, cfg)
        return predict_heads(decoded, anchors, self.weights, cfg)


def forward(
    levels: PyramidLevels,
    views: Sequence[CameraView],
    anchors: AnchorGrid,
    cfg: HeadConfig,
    model: Optional[ForwardModel] = None,
) -> DetectionResult:
    """fuse -> coordinates -> positional lift -> add -> encode -> queries -> decode -> heads."""
    if len(views) != levels[0].views:
        raise ShapeMismatch(f"{len(views)} views but pyramid has {levels[0].views}")
    model = ForwardModel.build(cfg, levels.channels) if model is None else model
    return model(levels, views, anchors)
