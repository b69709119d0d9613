"""Linear morphable face model: means, bases, coefficients, file format.

Shape and texture instances are affine in their coefficients:

    S = S_mean + B_id @ c_id + B_exp @ c_exp
    T = T_mean + B_tex @ c_tex

Basis matrices are (3n, d) with vertex-major vectorization: the flat order
is (x0, y0, z0, x1, y1, z1, ...), i.e. a C-order reshape of (n, 3).
Texture instances may leave [0, 1]; they are clamped at render time only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, ops
from .errors import ContractViolation, FormatError
from .meshgraph import MeshTopology, build_adjacency, icosphere, normalized_laplacian

# Coefficient vector layout: identity, expression, texture, pose, lighting.
IDENTITY_DIM = 80
EXPRESSION_DIM = 64
TEXTURE_DIM = 80
POSE_DIM = 6
LIGHTING_DIM = 27
COEFF_DIM = IDENTITY_DIM + EXPRESSION_DIM + TEXTURE_DIM + POSE_DIM + LIGHTING_DIM


@dataclass(frozen=True)
class Coefficients:
    """One face's parameters, split out of the flat 257-vector."""

    identity: np.ndarray
    expression: np.ndarray
    texture: np.ndarray
    pose: np.ndarray
    lighting: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.identity, self.expression, self.texture, self.pose, self.lighting]
        )


def split_coefficients(vec: np.ndarray) -> Coefficients:
    vec = np.asarray(vec, dtype=np.float64).ravel()
    if vec.shape != (COEFF_DIM,):
        raise ContractViolation(
            f"coefficient vector must have {COEFF_DIM} entries, got {vec.shape}"
        )
    o1 = IDENTITY_DIM
    o2 = o1 + EXPRESSION_DIM
    o3 = o2 + TEXTURE_DIM
    o4 = o3 + POSE_DIM
    return Coefficients(
        identity=vec[:o1].copy(),
        expression=vec[o1:o2].copy(),
        texture=vec[o2:o3].copy(),
        pose=vec[o3:o4].copy(),
        lighting=vec[o4:].copy(),
    )


@dataclass(frozen=True)
class MorphableModel:
    mean_shape: np.ndarray      # (n, 3)
    mean_texture: np.ndarray    # (n, 3), values in [0, 1]
    identity_basis: np.ndarray  # (3n, d_id)
    expression_basis: np.ndarray  # (3n, d_exp)
    texture_basis: np.ndarray   # (3n, d_tex)
    topology: MeshTopology

    def __post_init__(self):
        n = self.topology.n_vertices
        if self.mean_shape.shape != (n, 3):
            raise ContractViolation(f"mean_shape must be ({n}, 3)")
        if self.mean_texture.shape != (n, 3):
            raise ContractViolation(f"mean_texture must be ({n}, 3)")
        if self.mean_texture.min() < 0.0 or self.mean_texture.max() > 1.0:
            raise ContractViolation("mean_texture must lie in [0, 1]")
        for name, b in (
            ("identity_basis", self.identity_basis),
            ("expression_basis", self.expression_basis),
            ("texture_basis", self.texture_basis),
        ):
            if b.ndim != 2 or b.shape[0] != 3 * n:
                raise ContractViolation(f"{name} must be ({3 * n}, d), got {b.shape}")

    @property
    def n_vertices(self) -> int:
        return self.topology.n_vertices

    @property
    def dims(self) -> tuple[int, int, int]:
        return (
            self.identity_basis.shape[1],
            self.expression_basis.shape[1],
            self.texture_basis.shape[1],
        )


def shape_from_coeffs(model: MorphableModel, identity, expression) -> Tensor:
    """Differentiable shape instance, (n, 3)."""
    identity = ops.as_tensor(identity)
    expression = ops.as_tensor(expression)
    if identity.shape != (model.identity_basis.shape[1],):
        raise ContractViolation(
            f"identity coeffs must be ({model.identity_basis.shape[1]},), "
            f"got {identity.shape}"
        )
    if expression.shape != (model.expression_basis.shape[1],):
        raise ContractViolation(
            f"expression coeffs must be ({model.expression_basis.shape[1]},), "
            f"got {expression.shape}"
        )
    n = model.n_vertices
    offset = ops.add(
        ops.matmul(ops.constant(model.identity_basis), identity),
        ops.matmul(ops.constant(model.expression_basis), expression),
    )
    return ops.add(ops.constant(model.mean_shape), ops.reshape(offset, (n, 3)))


def texture_from_coeffs(model: MorphableModel, texture) -> Tensor:
    """Differentiable albedo instance, (n, 3); not clamped here."""
    texture = ops.as_tensor(texture)
    if texture.shape != (model.texture_basis.shape[1],):
        raise ContractViolation(
            f"texture coeffs must be ({model.texture_basis.shape[1]},), "
            f"got {texture.shape}"
        )
    n = model.n_vertices
    offset = ops.matmul(ops.constant(model.texture_basis), texture)
    return ops.add(ops.constant(model.mean_texture), ops.reshape(offset, (n, 3)))


def instantiate(model: MorphableModel, coeffs: Coefficients) -> tuple[Tensor, Tensor]:
    shape = shape_from_coeffs(model, coeffs.identity, coeffs.expression)
    texture = texture_from_coeffs(model, coeffs.texture)
    return shape, texture


# ---------------------------------------------------------------------------
# synthetic model construction

_ICOSPHERE_LEVELS = {12: 0, 42: 1, 162: 2, 642: 3, 2562: 4}


def _smooth_fields(eigvecs: np.ndarray, rng, count: int, n: int) -> np.ndarray:
    """count smooth (n, 3) fields from random low-frequency mixtures,
    returned flattened vertex-major as (3n, count)."""
    m = eigvecs.shape[1]
    out = np.empty((3 * n, count))
    for j in range(count):
        field = np.empty((n, 3))
        for axis in range(3):
            mix = rng.normal(size=m) / np.sqrt(m)
            field[:, axis] = eigvecs @ mix
        out[:, j] = field.reshape(-1)
    return out


def _decaying_columns(raw: np.ndarray, scale: float, ratio: float) -> np.ndarray:
    """Unit-normalize columns, then apply a strictly decreasing scale so
    column norms are non-increasing in the column index."""
    norms = np.linalg.norm(raw, axis=0)
    norms0 = np.where(norms > 0, norms, 1.0)
    decay = scale * ratio ** np.arange(raw.shape[1])
    return raw / norms0 * decay


def synth_model(
    seed: int,
    n: int = 642,
    dims: tuple[int, int, int] = (IDENTITY_DIM, EXPRESSION_DIM, TEXTURE_DIM),
) -> MorphableModel:
    """Deterministic synthetic face model on an icosphere mesh.

    The mean shape is an anisotropically squashed sphere with a nose-like
    radial bump; bases mix low graph-Laplacian eigenvectors (smooth,
    low-frequency deformations) with geometrically decaying column norms.
    ``n`` must be an icosphere vertex count (12, 42, 162, 642, 2562).
    """
    if n not in _ICOSPHERE_LEVELS:
        raise ContractViolation(
            f"n must be one of {sorted(_ICOSPHERE_LEVELS)}, got {n}"
        )
    d_id, d_exp, d_tex = dims
    sphere, topology = icosphere(_ICOSPHERE_LEVELS[n])

    # Face-like mean: squash to a head shape, push out a nose region.
    scale = np.array([0.9, 1.1, 0.78])
    mean_shape = sphere * scale
    nose_dir = np.array([0.0, -0.15, 1.0])
    nose_dir /= np.linalg.norm(nose_dir)
    align = sphere @ nose_dir
    bump = 0.22 * np.exp(-(1.0 - align) / 0.06)
    mean_shape = mean_shape + sphere * bump[:, None]

    # Low-frequency basis fields from the mesh Laplacian spectrum.
    lap = normalized_laplacian(build_adjacency(topology)).to_dense()
    eigvals, eigvecs = np.linalg.eigh(lap)
    m = min(24, n)
    low = eigvecs[:, :m]

    rng = np.random.default_rng([seed, 101])
    identity_basis = _decaying_columns(
        _smooth_fields(low, rng, d_id, n), scale=0.35, ratio=0.94
    )
    expression_basis = _decaying_columns(
        _smooth_fields(low, rng, d_exp, n), scale=0.16, ratio=0.94
    )
    texture_basis = _decaying_columns(
        _smooth_fields(low, rng, d_tex, n), scale=0.30, ratio=0.94
    )

    # Skin-tone-ish mean albedo with smooth seeded variation, kept inside
    # [0.2, 0.9] so coefficient perturbations stay mostly renderable.
    base = np.array([0.66, 0.52, 0.44])
    variation = np.empty((n, 3))
    for axis in range(3):
        mix = rng.normal(size=m) / np.sqrt(m)
        variation[:, axis] = low @ mix
    variation *= 0.10 / max(np.abs(variation).max(), 1e-12)
    mean_texture = np.clip(base[None, :] + variation, 0.2, 0.9)

    return MorphableModel(
        mean_shape=mean_shape,
        mean_texture=mean_texture,
        identity_basis=identity_basis,
        expression_basis=expression_basis,
        texture_basis=texture_basis,
        topology=topology,
    )


# ---------------------------------------------------------------------------
# binary container

_MAGIC = b"FACEMM\x00\x01"
_VERSION = 1


def save_model(path, model: MorphableModel) -> None:
    """Write the little-endian binary container.

    Layout: 8-byte magic, u32 version, u64 n_vertices, u64 n_triangles,
    u32 x3 basis dims, triangles as i64, then f64 arrays in order
    mean_shape, mean_texture, identity/expression/texture bases.
    """
    d_id, d_exp, d_tex = model.dims
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<QQ", model.n_vertices, model.topology.n_triangles))
        f.write(struct.pack("<III", d_id, d_exp, d_tex))
        f.write(model.topology.triangles.astype("<i8").tobytes())
        for arr in (
            model.mean_shape,
            model.mean_texture,
            model.identity_basis,
            model.expression_basis,
            model.texture_basis,
        ):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> MorphableModel:
    with open(path, "rb") as f:
        blob = f.read()

    def need(offset: int, count: int) -> bytes:
        if offset + count > len(blob):
            raise FormatError(
                f"truncated container: wanted {count} bytes", offset=offset
            )
        return blob[offset : offset + count]

    if need(0, 8) != _MAGIC:
        raise FormatError("bad magic; not a morphable model container", offset=0)
    (version,) = struct.unpack("<I", need(8, 4))
    if version != _VERSION:
        raise FormatError(f"unsupported container version {version}", offset=8)
    n, nt = struct.unpack("<QQ", need(12, 16))
    d_id, d_exp, d_tex = struct.unpack("<III", need(28, 12))
    pos = 40

    tri_bytes = 8 * nt * 3
    triangles = np.frombuffer(need(pos, tri_bytes), dtype="<i8").reshape(nt, 3)
    pos += tri_bytes

    def read_f64(shape) -> np.ndarray:
        nonlocal pos
        count = int(np.prod(shape))
        arr = np.frombuffer(need(pos, 8 * count), dtype="<f8").reshape(shape)
        pos += 8 * count
        return arr.copy()

    mean_shape = read_f64((n, 3))
    mean_texture = read_f64((n, 3))
    identity_basis = read_f64((3 * n, d_id))
    expression_basis = read_f64((3 * n, d_exp))
    texture_basis = read_f64((3 * n, d_tex))
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes", offset=pos)
    try:
        topology = MeshTopology(n, triangles.astype(np.int64))
        return MorphableModel(
            mean_shape=mean_shape,
            mean_texture=mean_texture,
            identity_basis=identity_basis,
            expression_basis=expression_basis,
            texture_basis=texture_basis,
            topology=topology,
        )
    except ContractViolation as e:
        raise FormatError(f"inconsistent container: {e}", offset=40) from e
