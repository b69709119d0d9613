"""Differentiable deferred-shading renderer.

A fixed rasterization pass produces per-pixel triangle ids; barycentric
weights are then recomputed from the projected vertex coordinates with
recorded operations, so color gradients reach vertex attributes, pose,
and lighting.  Coverage itself is piecewise constant: there is no
edge-antialiasing gradient.
"""

from .camera import Camera, project
from .png_io import load_png, save_png
from .pose import pose_transform, rotation_matrix
from .raster import (
    RenderBuffers,
    interpolate,
    pixel_attributes,
    pixel_barycentrics,
    rasterize,
    scatter_pixels,
)
from .scene import RenderResult, project_vertex_colors, render_image, shade_vertices
from .shading import SH_BAND_FACTORS, sh_basis, sh_shade

__all__ = [
    "Camera",
    "RenderBuffers",
    "RenderResult",
    "SH_BAND_FACTORS",
    "interpolate",
    "load_png",
    "pixel_attributes",
    "pixel_barycentrics",
    "pose_transform",
    "project",
    "project_vertex_colors",
    "rasterize",
    "render_image",
    "rotation_matrix",
    "save_png",
    "scatter_pixels",
    "sh_basis",
    "sh_shade",
]
