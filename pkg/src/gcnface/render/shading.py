"""Spherical-harmonics illumination, bands 0-2.

The 27 lighting numbers are 9 SH coefficients per RGB channel, stored
channel-major: coefficient b of channel c lives at index c * 9 + b.
Basis functions use the real SH constants

    Y_0       = 0.282095
    Y_1..3    = 0.488603 * (y, z, x)
    Y_4,5,7   = 1.092548 * (xy, yz, xz)
    Y_6       = 0.315392 * (3 z^2 - 1)
    Y_8       = 0.546274 * (x^2 - y^2)

evaluated on unit normals.
"""

from __future__ import annotations

from ..diffcore import Tensor, ops
from ..errors import ContractViolation

SH_BAND_FACTORS = (
    0.282095,
    0.488603, 0.488603, 0.488603,
    1.092548, 1.092548, 0.315392, 1.092548, 0.546274,
)


def sh_basis(normals: Tensor) -> Tensor:
    """Evaluate the 9 basis functions on (m, 3) unit normals -> (m, 9)."""
    normals = ops.as_tensor(normals)
    if normals.ndim != 2 or normals.shape[1] != 3:
        raise ContractViolation(f"normals must be (m, 3), got {normals.shape}")
    m = normals.shape[0]
    x = ops.slice_(normals, (slice(None), slice(0, 1)))
    y = ops.slice_(normals, (slice(None), slice(1, 2)))
    z = ops.slice_(normals, (slice(None), slice(2, 3)))
    k = [ops.constant(f) for f in SH_BAND_FACTORS]
    one = ops.broadcast_to(ops.constant([[1.0]]), (m, 1))
    cols = [
        ops.mul(k[0], one),
        ops.mul(k[1], y),
        ops.mul(k[2], z),
        ops.mul(k[3], x),
        ops.mul(k[4], ops.mul(x, y)),
        ops.mul(k[5], ops.mul(y, z)),
        ops.mul(k[6], ops.sub(ops.mul(ops.constant(3.0), ops.mul(z, z)),
                              one)),
        ops.mul(k[7], ops.mul(x, z)),
        ops.mul(k[8], ops.sub(ops.mul(x, x), ops.mul(y, y))),
    ]
    return ops.concat(cols, axis=1)


def sh_shade(albedo: Tensor, normals: Tensor, lighting: Tensor) -> Tensor:
    """Per-sample shaded color: albedo_c * sum_b l[c*9+b] * Y_b(normal).

    Works on any row count, so it serves both per-pixel and per-vertex
    shading.  No clamping; export handles the [0, 1] range.
    """
    albedo = ops.as_tensor(albedo)
    normals = ops.as_tensor(normals)
    lighting = ops.as_tensor(lighting)
    if lighting.shape != (27,):
        raise ContractViolation(f"lighting must be (27,), got {lighting.shape}")
    if albedo.shape != normals.shape or albedo.ndim != 2 or albedo.shape[1] != 3:
        raise ContractViolation(
            f"albedo {albedo.shape} and normals {normals.shape} must both be (m, 3)"
        )
    basis = sh_basis(normals)  # (m, 9)
    m = albedo.shape[0]
    channels = []
    for c in range(3):
        l_c = ops.slice_(lighting, (slice(9 * c, 9 * c + 9),))
        mult = ops.matmul(basis, l_c)  # (m,)
        a_c = ops.slice_(albedo, (slice(None), c))
        channels.append(ops.reshape(ops.mul(a_c, mult), (m, 1)))
    return ops.concat(channels, axis=1)
