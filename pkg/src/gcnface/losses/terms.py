"""Pixel, identity, and vertex objectives, plus the stand-in embedder.

The masked pixel distance and the per-vertex distance both use a tiny
additive guard under the square root so that exactly-identical inputs
produce a loss that is numerically zero (~1e-150) while the gradient at
zero stays finite instead of NaN.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor, ops
from ..errors import ContractViolation, DegenerateMaskError

NORM_GUARD = 1e-300


class ToyEmbedder:
    """Deterministic image embedding standing in for a face-recognition net.

    Area-downsamples to 8x8, flattens, and applies a fixed seeded random
    projection.  The last output coordinate is the input's Euclidean
    norm, so a nonzero image can never embed to the zero vector.  Built
    from recorded ops: identity-loss gradients flow through it.
    """

    GRID = 8

    def __init__(self, height: int, width: int, dim: int = 128, seed: int = 0):
        if height % self.GRID or width % self.GRID:
            raise ContractViolation(
                f"image sides must be divisible by {self.GRID}, got {height}x{width}"
            )
        if dim < 2:
            raise ContractViolation("embedding dimension must be at least 2")
        self.height = height
        self.width = width
        self.dim = dim
        flat_in = self.GRID * self.GRID * 3
        rng = np.random.default_rng([seed, 90])
        self.projection = ops.constant(
            rng.standard_normal((flat_in, dim - 1)) / np.sqrt(flat_in)
        )

    def __call__(self, image: Tensor) -> Tensor:
        image = ops.as_tensor(image)
        if image.shape != (self.height, self.width, 3):
            raise ContractViolation(
                f"expected ({self.height}, {self.width}, 3), got {image.shape}"
            )
        bh = self.height // self.GRID
        bw = self.width // self.GRID
        blocks = ops.reshape(image, (self.GRID, bh, self.GRID, bw, 3))
        pooled = ops.mul(ops.sum_(blocks, axis=(1, 3)),
                         ops.constant(1.0 / (bh * bw)))
        flat = ops.reshape(pooled, (self.GRID * self.GRID * 3,))
        head = ops.matmul(flat, self.projection)
        tail = ops.reshape(ops.l2norm(flat, guard=NORM_GUARD), (1,))
        return ops.concat([head, tail])


def _check_mask(mask: np.ndarray, shape: tuple[int, int], name: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != shape:
        raise ContractViolation(f"{name} shape {mask.shape} != image {shape}")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ContractViolation(f"{name} must be binary")
    return mask


def pixel_loss(x: Tensor, x_render: Tensor, m_face: np.ndarray,
               m_proj: np.ndarray) -> Tensor:
    """Masked mean per-pixel RGB distance between two images.

        sum M . ||x - x'||_2 / sum M,   M = M_face * M_proj

    ``x`` is the observation (constant); gradients reach ``x_render``.
    """
    x = ops.as_tensor(x)
    x_render = ops.as_tensor(x_render)
    if x.ndim != 3 or x.shape[2] != 3 or x.shape != x_render.shape:
        raise ContractViolation(
            f"images must share an (H, W, 3) shape: {x.shape} vs {x_render.shape}"
        )
    h, w = x.shape[:2]
    m = _check_mask(m_face, (h, w), "M_face") * _check_mask(m_proj, (h, w), "M_proj")
    total = m.sum()
    if total == 0:
        raise DegenerateMaskError("mask intersection is empty")
    diff = ops.reshape(ops.sub(x, x_render), (h * w, 3))
    dist = ops.rownorm(diff, guard=NORM_GUARD)
    weighted = ops.mul(dist, ops.constant(m.reshape(-1)))
    return ops.mul(ops.sum_(weighted), ops.constant(1.0 / total))


def identity_loss(x: Tensor, x_render: Tensor, embed) -> Tensor:
    """Cosine distance between image embeddings: 1 - cos(F(x), F(x'))."""
    fx = embed(ops.as_tensor(x))
    fy = embed(ops.as_tensor(x_render))
    nx = float(np.linalg.norm(fx.data))
    ny = float(np.linalg.norm(fy.data))
    if nx == 0.0 or ny == 0.0:
        raise ContractViolation("identity loss needs nonzero embeddings")
    dot = ops.dot(fx, fy)
    denom = ops.mul(ops.l2norm(fx, guard=NORM_GUARD),
                    ops.l2norm(fy, guard=NORM_GUARD))
    return ops.sub(ops.constant(1.0), ops.div(dot, denom))


def vertex_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean Euclidean distance between matched vertex rows."""
    a = ops.as_tensor(a)
    b = ops.as_tensor(b)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape != b.shape:
        raise ContractViolation(
            f"vertex arrays must share an (n, 3) shape: {a.shape} vs {b.shape}"
        )
    dist = ops.rownorm(ops.sub(a, b), guard=NORM_GUARD)
    return ops.mean(dist)
