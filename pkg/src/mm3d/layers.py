"""Seeded affine maps, the only "learned" layer type in the forward pass.

Weights are uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` drawn from a
numpy generator on a derived seed.  ``zeros`` and ``identity`` builders give
closed-form configurations for tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import numpy_rng


@dataclass(frozen=True)
class AffineMap:
    """``y = x @ weight + bias`` with ``weight`` of shape (in, out)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ValueError(f"weight {w.shape} and bias {b.shape} disagree")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def seeded(cls, in_dim: int, out_dim: int, seed: int, *parts, bias: bool = True) -> "AffineMap":
        rng = numpy_rng(seed, *parts)
        bound = 1.0 / np.sqrt(in_dim)
        w = rng.uniform(-bound, bound, size=(in_dim, out_dim))
        b = rng.uniform(-bound, bound, size=out_dim) if bias else np.zeros(out_dim)
        return cls(w, b)

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int) -> "AffineMap":
        return cls(np.zeros((in_dim, out_dim)), np.zeros(out_dim))

    @classmethod
    def identity(cls, in_dim: int, out_dim: int | None = None) -> "AffineMap":
        """Copies the first ``min(in, out)`` inputs; remaining outputs are 0."""
        out_dim = in_dim if out_dim is None else out_dim
        return cls(np.eye(in_dim, out_dim), np.zeros(out_dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weight + self.bias

    def jvp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jacobian-vector product; ``x`` only fixes the batch shape."""
        del x
        return np.asarray(v, dtype=np.float64) @ self.weight


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class FeedForward:
    """Two affine maps with a ReLU between them."""

    inner: AffineMap
    outer: AffineMap

    @classmethod
    def seeded(cls, dim: int, hidden: int, seed: int, *parts, bias: bool = True) -> "FeedForward":
        return cls(
            AffineMap.seeded(dim, hidden, seed, *parts, "inner", bias=bias),
            AffineMap.seeded(hidden, dim, seed, *parts, "outer", bias=bias),
        )

    @classmethod
    def zeros(cls, dim: int, hidden: int) -> "FeedForward":
        return cls(AffineMap.zeros(dim, hidden), AffineMap.zeros(hidden, dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.outer(relu(self.inner(x)))
