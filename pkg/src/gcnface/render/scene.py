"""Full image formation and its non-differentiable inverse lookup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, no_grad, ops
from ..errors import ContractViolation
from ..meshgraph import MeshTopology, vertex_normals
from .camera import Camera, project
from .pose import pose_transform
from .raster import (
    NEAR_PLANE,
    RenderBuffers,
    pixel_attributes,
    pixel_barycentrics,
    rasterize,
    scatter_pixels,
)
from .shading import sh_shade

NORMAL_GUARD = 1e-12


@dataclass(frozen=True)
class RenderResult:
    image: Tensor          # (H, W, 3), unclamped
    buffers: RenderBuffers

    @property
    def m_proj(self) -> np.ndarray:
        return self.buffers.coverage


def _renormalize(rows: Tensor) -> Tensor:
    """Unit rows; the interpolated normals shrink but never flip."""
    norm = ops.rownorm(rows, guard=NORMAL_GUARD ** 2)
    inv = ops.div(ops.constant(1.0), ops.add(norm, ops.constant(NORMAL_GUARD)))
    p = rows.shape[0]
    return ops.mul(rows, ops.reshape(inv, (p, 1)))


def render_image(
    positions: Tensor,
    texture: Tensor,
    pose: Tensor,
    lighting: Tensor,
    topology: MeshTopology,
    camera: Camera,
    mode: str = "shaded",
) -> RenderResult:
    """Pose, project, rasterize, interpolate, and light the mesh.

    ``mode`` is "shaded" for the full SH pipeline or "albedo" to bypass
    illumination and show interpolated texture directly.  The returned
    image is differentiable w.r.t. positions, texture, pose, and
    lighting; coverage is a constant of the graph.
    """
    if mode not in ("shaded", "albedo"):
        raise ContractViolation(f"unknown render mode {mode!r}")
    positions = ops.as_tensor(positions)
    texture = ops.as_tensor(texture)
    n = topology.n_vertices
    if positions.shape != (n, 3) or texture.shape != (n, 3):
        raise ContractViolation(
            f"positions {positions.shape} / texture {texture.shape} "
            f"do not match the {n}-vertex topology"
        )
    albedo = ops.clamp(texture, 0.0, 1.0)
    cam_pos = pose_transform(positions, pose)
    screen = project(camera, cam_pos)
    depth = cam_pos.data[:, 2]
    buffers = rasterize(screen.data, depth, topology, camera.height, camera.width)
    bary = pixel_barycentrics(screen, buffers)
    pix_albedo = pixel_attributes(albedo, buffers, bary)
    if mode == "albedo":
        return RenderResult(scatter_pixels(pix_albedo, buffers), buffers)
    normals, _ = vertex_normals(cam_pos, topology)
    pix_normal = _renormalize(pixel_attributes(normals, buffers, bary))
    shaded = sh_shade(pix_albedo, pix_normal, lighting)
    return RenderResult(scatter_pixels(shaded, buffers), buffers)


def shade_vertices(
    texture: Tensor,
    positions: Tensor,
    pose: Tensor,
    lighting: Tensor,
    topology: MeshTopology,
) -> Tensor:
    """Per-vertex analogue of the pixel shading: illuminate each vertex's
    albedo with its own camera-space normal."""
    albedo = ops.clamp(ops.as_tensor(texture), 0.0, 1.0)
    cam_pos = pose_transform(ops.as_tensor(positions), pose)
    normals, _ = vertex_normals(cam_pos, topology)
    return sh_shade(albedo, normals, lighting)


def project_vertex_colors(
    image: np.ndarray,
    positions: np.ndarray,
    pose: np.ndarray,
    topology: MeshTopology,
    camera: Camera,
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly sample the image at each vertex's projection.

    Returns (colors (n, 3), valid (n,) bool).  A vertex is valid when it
    projects inside the frame, sits in front of the near plane, and
    faces the camera.  Colors of invalid vertices are zero.  This lookup
    is a data source, not part of the differentiable graph.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractViolation(f"image must be (H, W, 3), got {image.shape}")
    h, w = image.shape[:2]
    with no_grad():
        cam_pos = pose_transform(ops.as_tensor(positions), ops.as_tensor(pose))
        screen = project(camera, cam_pos).data
        normals, _ = vertex_normals(cam_pos, topology)
    z = cam_pos.data[:, 2]
    u, v = screen[:, 0], screen[:, 1]
    valid = (
        (z > NEAR_PLANE)
        & (normals.data[:, 2] < 0.0)
        & (u >= 0.5) & (u <= w - 0.5)
        & (v >= 0.5) & (v <= h - 0.5)
    )
    gx = np.clip(u - 0.5, 0.0, w - 1.0)
    gy = np.clip(v - 0.5, 0.0, h - 1.0)
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (gx - x0)[:, None]
    fy = (gy - y0)[:, None]
    colors = (
        image[y0, x0] * (1 - fx) * (1 - fy)
        + image[y0, x1] * fx * (1 - fy)
        + image[y1, x0] * (1 - fx) * fy
        + image[y1, x1] * fx * fy
    )
    colors[~valid] = 0.0
    return colors, valid
