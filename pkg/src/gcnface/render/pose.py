"""Rigid pose: XYZ Euler rotation plus translation, 6 degrees of freedom."""

from __future__ import annotations

from ..diffcore import Tensor, ops
from ..errors import ContractViolation


def _elem(t) -> Tensor:
    return ops.reshape(t, (1,))


def rotation_matrix(angles: Tensor) -> Tensor:
    """3x3 rotation from XYZ Euler angles: R = Rz @ Ry @ Rx."""
    angles = ops.as_tensor(angles)
    if angles.shape != (3,):
        raise ContractViolation(f"angles must be (3,), got {angles.shape}")
    one = ops.constant([1.0])
    zero = ops.constant([0.0])

    def axis_terms(i):
        a = ops.slice_(angles, (i,))
        return _elem(ops.sin(a)), _elem(ops.cos(a))

    sx, cx = axis_terms(0)
    sy, cy = axis_terms(1)
    sz, cz = axis_terms(2)
    rx = ops.reshape(
        ops.concat([one, zero, zero,
                    zero, cx, ops.neg(sx),
                    zero, sx, cx]), (3, 3))
    ry = ops.reshape(
        ops.concat([cy, zero, sy,
                    zero, one, zero,
                    ops.neg(sy), zero, cy]), (3, 3))
    rz = ops.reshape(
        ops.concat([cz, ops.neg(sz), zero,
                    sz, cz, zero,
                    zero, zero, one]), (3, 3))
    return ops.matmul(ops.matmul(rz, ry), rx)


def pose_transform(positions: Tensor, pose: Tensor) -> Tensor:
    """World to camera space: x -> R x + t for every vertex row.

    ``pose`` packs three Euler angles followed by the translation.
    """
    positions = ops.as_tensor(positions)
    pose = ops.as_tensor(pose)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ContractViolation(f"positions must be (n, 3), got {positions.shape}")
    if pose.shape != (6,):
        raise ContractViolation(f"pose must be (6,), got {pose.shape}")
    r = rotation_matrix(ops.slice_(pose, (slice(0, 3),)))
    t = ops.reshape(ops.slice_(pose, (slice(3, 6),)), (1, 3))
    return ops.add(ops.matmul(positions, ops.transpose(r)), t)
