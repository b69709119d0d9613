"""Triangle rasterization into id/barycentric buffers, and the recorded
re-evaluation of those barycentrics that carries gradients.

The visibility decision (which triangle covers which pixel) is made once
with plain numpy and then frozen; only the weights within the chosen
triangle are differentiable.  Depth is interpolated affinely in screen
space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, ops
from ..errors import ContractViolation
from ..meshgraph import MeshTopology

NEAR_PLANE = 1e-3
EDGE_SLACK = 1e-12


@dataclass(frozen=True)
class RenderBuffers:
    """Per-pixel rasterization output.

    triangle_id   (H, W) int64, -1 where no triangle covers the pixel
    barycentric   (H, W, 3) weights of the covering triangle's corners
    pixel_rows    (P,) row index of each covered pixel
    pixel_cols    (P,) column index of each covered pixel
    corners       (P, 3) vertex indices of the covering triangle
    """

    triangle_id: np.ndarray
    barycentric: np.ndarray
    pixel_rows: np.ndarray
    pixel_cols: np.ndarray
    corners: np.ndarray

    @property
    def height(self) -> int:
        return self.triangle_id.shape[0]

    @property
    def width(self) -> int:
        return self.triangle_id.shape[1]

    @property
    def coverage(self) -> np.ndarray:
        """M_proj: 1.0 where a triangle covers the pixel."""
        return (self.triangle_id >= 0).astype(np.float64)

    @property
    def n_covered(self) -> int:
        return int(self.pixel_rows.shape[0])


def rasterize(
    screen_xy: np.ndarray,
    depth: np.ndarray,
    topology: MeshTopology,
    height: int,
    width: int,
) -> RenderBuffers:
    """Z-buffered coverage pass over all triangles.

    ``screen_xy`` are projected pixel coordinates, ``depth`` the camera-space
    z per vertex.  Triangles with any corner at or behind the near plane are
    dropped; so are degenerate screen-space triangles.  Pixel centers sit at
    (col + 0.5, row + 0.5).
    """
    screen_xy = np.asarray(screen_xy, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    if screen_xy.shape != (depth.shape[0], 2):
        raise ContractViolation(
            f"screen_xy {screen_xy.shape} does not match {depth.shape[0]} depths"
        )
    if height < 8 or width < 8:
        raise ContractViolation("image sides must be at least 8 pixels")

    tri_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    zbuf = np.full((height, width), np.inf)

    for t, (ia, ib, ic) in enumerate(topology.triangles):
        za, zb, zc = depth[ia], depth[ib], depth[ic]
        if min(za, zb, zc) <= NEAR_PLANE:
            continue
        ax, ay = screen_xy[ia]
        bx, by = screen_xy[ib]
        cx, cy = screen_xy[ic]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if abs(area) < 1e-12:
            continue
        r0 = max(int(np.floor(min(ay, by, cy) - 0.5)), 0)
        r1 = min(int(np.ceil(max(ay, by, cy) - 0.5)), height - 1)
        c0 = max(int(np.floor(min(ax, bx, cx) - 0.5)), 0)
        c1 = min(int(np.ceil(max(ax, bx, cx) - 0.5)), width - 1)
        if r1 < r0 or c1 < c0:
            continue
        px = np.arange(c0, c1 + 1) + 0.5
        py = (np.arange(r0, r1 + 1) + 0.5)[:, None]
        wa = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / area
        wb = ((cy - ay) * (px - ax) + (ax - cx) * (py - ay)) / area
        wc = 1.0 - wa - wb
        inside = (wa >= -EDGE_SLACK) & (wb >= -EDGE_SLACK) & (wc >= -EDGE_SLACK)
        if not inside.any():
            continue
        z = wa * za + wb * zb + wc * zc
        win = inside & (z < zbuf[r0:r1 + 1, c0:c1 + 1])
        if not win.any():
            continue
        sub = (slice(r0, r1 + 1), slice(c0, c1 + 1))
        zbuf[sub][win] = z[win]
        tri_id[sub][win] = t
        for k, w in enumerate((wa, wb, wc)):
            bary[sub + (k,)][win] = np.broadcast_to(w, win.shape)[win]

    rows, cols = np.nonzero(tri_id >= 0)
    corners = topology.triangles[tri_id[rows, cols]]
    return RenderBuffers(tri_id, bary, rows, cols, corners)


def pixel_barycentrics(screen_xy: Tensor, buffers: RenderBuffers) -> Tensor:
    """Recorded barycentric weights for every covered pixel, (P, 3).

    Recomputes the values frozen in ``buffers`` from the projected
    coordinates so gradients flow back to vertex positions.  Corner
    membership is a constant of the graph.
    """
    screen_xy = ops.as_tensor(screen_xy)
    n = screen_xy.shape[0]
    flat = ops.reshape(screen_xy, (2 * n,))
    corners = buffers.corners
    ax = ops.gather_flat(flat, 2 * corners[:, 0])
    ay = ops.gather_flat(flat, 2 * corners[:, 0] + 1)
    bx = ops.gather_flat(flat, 2 * corners[:, 1])
    by = ops.gather_flat(flat, 2 * corners[:, 1] + 1)
    cx = ops.gather_flat(flat, 2 * corners[:, 2])
    cy = ops.gather_flat(flat, 2 * corners[:, 2] + 1)
    px = ops.constant(buffers.pixel_cols + 0.5)
    py = ops.constant(buffers.pixel_rows + 0.5)

    area = ops.sub(
        ops.mul(ops.sub(bx, ax), ops.sub(cy, ay)),
        ops.mul(ops.sub(by, ay), ops.sub(cx, ax)),
    )
    wa = ops.div(
        ops.add(
            ops.mul(ops.sub(by, cy), ops.sub(px, cx)),
            ops.mul(ops.sub(cx, bx), ops.sub(py, cy)),
        ),
        area,
    )
    wb = ops.div(
        ops.add(
            ops.mul(ops.sub(cy, ay), ops.sub(px, ax)),
            ops.mul(ops.sub(ax, cx), ops.sub(py, ay)),
        ),
        area,
    )
    wc = ops.sub(ops.sub(ops.constant(1.0), wa), wb)
    p = corners.shape[0]
    return ops.concat(
        [ops.reshape(w, (p, 1)) for w in (wa, wb, wc)], axis=1
    )


def pixel_attributes(
    attributes: Tensor, buffers: RenderBuffers, bary: Tensor | None = None
) -> Tensor:
    """Barycentric-weighted vertex attributes per covered pixel, (P, C).

    Pass the recorded ``bary`` from :func:`pixel_barycentrics` to keep
    position gradients; otherwise the frozen buffer weights are used and
    only attribute gradients flow.
    """
    attributes = ops.as_tensor(attributes)
    if attributes.ndim != 2:
        raise ContractViolation(f"attributes must be (n, C), got {attributes.shape}")
    n, ch = attributes.shape
    if bary is None:
        bary = ops.constant(
            buffers.barycentric[buffers.pixel_rows, buffers.pixel_cols]
        )
    p = buffers.corners.shape[0]
    if bary.shape != (p, 3):
        raise ContractViolation(f"bary must be ({p}, 3), got {bary.shape}")
    flat = ops.reshape(attributes, (n * ch,))
    acc = None
    for k in range(3):
        idx = buffers.corners[:, k, None] * ch + np.arange(ch)
        corner_attr = ops.gather_flat(flat, idx)  # (P, C)
        w = ops.slice_(bary, (slice(None), slice(k, k + 1)))
        term = ops.mul(w, corner_attr)
        acc = term if acc is None else ops.add(acc, term)
    return acc


def scatter_pixels(values: Tensor, buffers: RenderBuffers) -> Tensor:
    """Place per-covered-pixel values (P, C) into a zero (H, W, C) image."""
    values = ops.as_tensor(values)
    p = buffers.corners.shape[0]
    if values.ndim != 2 or values.shape[0] != p:
        raise ContractViolation(f"values must be ({p}, C), got {values.shape}")
    ch = values.shape[1]
    pix = buffers.pixel_rows * buffers.width + buffers.pixel_cols
    idx = pix[:, None] * ch + np.arange(ch)
    image_flat = ops.scatter_flat(
        ops.reshape(values, (p * ch,)),
        idx.reshape(-1),
        (buffers.height * buffers.width * ch,),
    )
    return ops.reshape(image_flat, (buffers.height, buffers.width, ch))


def interpolate(
    attributes: Tensor, buffers: RenderBuffers, bary: Tensor | None = None
) -> Tensor:
    """Scatter barycentric-weighted vertex attributes into an (H, W, C)
    image; background pixels are zero."""
    return scatter_pixels(pixel_attributes(attributes, buffers, bary), buffers)
