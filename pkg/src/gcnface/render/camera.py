"""Pinhole camera looking along +z, principal point at the image center."""

from __future__ import annotations

from dataclasses import dataclass

from ..diffcore import Tensor, ops
from ..errors import ContractViolation


@dataclass(frozen=True)
class Camera:
    focal: float
    width: int
    height: int

    def __post_init__(self):
        if self.focal <= 0:
            raise ContractViolation(f"focal length must be positive, got {self.focal}")
        if self.width < 8 or self.height < 8:
            raise ContractViolation("image sides must be at least 8 pixels")

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


def project(camera: Camera, positions: Tensor) -> Tensor:
    """Camera-space (n, 3) to pixel coordinates (n, 2).

    u grows to the right, v downward (row-major images), so +y in camera
    space maps up the screen:

        u = cx + f x / z        v = cy - f y / z

    Behind-camera vertices produce finite but meaningless values here;
    the rasterizer rejects triangles touching them by depth.
    """
    positions = ops.as_tensor(positions)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ContractViolation(f"positions must be (n, 3), got {positions.shape}")
    x = ops.slice_(positions, (slice(None), slice(0, 1)))
    y = ops.slice_(positions, (slice(None), slice(1, 2)))
    z = ops.slice_(positions, (slice(None), slice(2, 3)))
    f = ops.constant(camera.focal)
    u = ops.add(ops.mul(f, ops.div(x, z)), ops.constant(camera.cx))
    v = ops.sub(ops.constant(camera.cy), ops.mul(f, ops.div(y, z)))
    return ops.concat([u, v], axis=1)
