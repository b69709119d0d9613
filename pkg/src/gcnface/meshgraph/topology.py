"""Triangle-mesh connectivity and per-vertex normals."""

from __future__ import annotations

import numpy as np

from ..diffcore import SparseMatrix, Tensor
from ..diffcore import ops
from ..errors import ContractViolation


class MeshTopology:
    """Vertex count plus triangle index array (m, 3), vertex-major order.

    Triangles are validated on construction: indices in range, no repeated
    vertex within a triangle.
    """

    __slots__ = ("n_vertices", "triangles")

    def __init__(self, n_vertices: int, triangles):
        self.n_vertices = int(n_vertices)
        tri = np.asarray(triangles, dtype=np.int64)
        if tri.size == 0:
            tri = tri.reshape(0, 3)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise ContractViolation(f"triangles must be (m, 3), got {tri.shape}")
        if self.n_vertices < 0:
            raise ContractViolation("negative vertex count")
        if tri.size:
            if tri.min() < 0 or tri.max() >= self.n_vertices:
                raise ContractViolation("triangle index out of range")
            if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])):
                raise ContractViolation("triangle repeats a vertex")
        self.triangles = tri

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (e, 2) array."""
        tri = self.triangles
        pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    def __repr__(self) -> str:
        return f"MeshTopology(n={self.n_vertices}, tris={self.n_triangles})"


def build_adjacency(topology: MeshTopology) -> SparseMatrix:
    """Symmetric binary vertex adjacency with a zero diagonal."""
    e = topology.edges()
    n = topology.n_vertices
    if len(e) == 0:
        return SparseMatrix(n, n, [], [], [])
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return SparseMatrix(n, n, rows, cols, np.ones(len(rows)))


def icosphere(level: int) -> tuple[np.ndarray, MeshTopology]:
    """Subdivided icosahedron on the unit sphere.

    Level k has 12, 42, 162, 642, 2562, ... vertices and 20 * 4**k
    triangles.  Construction is deterministic: midpoint vertices are
    created in face iteration order.
    """
    if level < 0:
        raise ContractViolation("icosphere level must be >= 0")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )

    for _ in range(level):
        vlist = list(verts)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = vlist[a] + vlist[b]
                p = p / np.linalg.norm(p)
                midpoint[key] = len(vlist)
                vlist.append(p)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)

    return verts, MeshTopology(len(verts), faces)


def vertex_normals(positions: Tensor, topology: MeshTopology):
    """Differentiable per-vertex normals.

    Each vertex normal is the normalized mean of the unit normals of its
    incident triangles.  Both normalizations share the same guard: a face
    with (numerically) zero area, or a vertex whose incident normals cancel,
    yields a zero normal and sets the returned degeneracy flag.

    Returns (normals (n, 3) tensor, had_degenerate bool).
    """
    positions = ops.as_tensor(positions)
    n = topology.n_vertices
    if positions.shape != (n, 3):
        raise ContractViolation(
            f"positions {positions.shape} do not match vertex count {n}"
        )
    tri = topology.triangles
    if len(tri) == 0:
        return Tensor(np.zeros((n, 3))), True

    p0 = ops.gather_flat(positions, _row_idx(tri[:, 0]))
    p1 = ops.gather_flat(positions, _row_idx(tri[:, 1]))
    p2 = ops.gather_flat(positions, _row_idx(tri[:, 2]))
    face = _cross(ops.sub(p1, p0), ops.sub(p2, p0))

    face_unit, face_ok = _normalize_rows(face)
    # Accumulate unit face normals onto their three corners, then divide by
    # incidence counts to get the mean.
    idx = np.concatenate([_row_idx(tri[:, k]) for k in range(3)])
    stacked = ops.concat([face_unit, face_unit, face_unit], axis=0)
    summed = ops.scatter_flat(stacked, idx, (n, 3))
    counts = np.zeros(n)
    np.add.at(counts, tri.reshape(-1), 1.0)
    counts = np.maximum(counts, 1.0)
    mean_normal = ops.div(summed, ops.constant(counts[:, None]))

    normals, vertex_ok = _normalize_rows(mean_normal)
    return normals, (not face_ok) or (not vertex_ok)


def _row_idx(rows: np.ndarray) -> np.ndarray:
    # Flat element indices of full (len(rows), 3) row gathers.
    return (rows[:, None] * 3 + np.arange(3)[None, :]).astype(np.int64)


def _cross(a: Tensor, b: Tensor) -> Tensor:
    ax = ops.slice_(a, (slice(None), slice(0, 1)))
    ay = ops.slice_(a, (slice(None), slice(1, 2)))
    az = ops.slice_(a, (slice(None), slice(2, 3)))
    bx = ops.slice_(b, (slice(None), slice(0, 1)))
    by = ops.slice_(b, (slice(None), slice(1, 2)))
    bz = ops.slice_(b, (slice(None), slice(2, 3)))
    cx = ops.sub(ops.mul(ay, bz), ops.mul(az, by))
    cy = ops.sub(ops.mul(az, bx), ops.mul(ax, bz))
    cz = ops.sub(ops.mul(ax, by), ops.mul(ay, bx))
    return ops.concat([cx, cy, cz], axis=1)


_DEGENERATE_NORM = 1e-12


def _normalize_rows(v: Tensor) -> tuple[Tensor, bool]:
    """Row-normalize; rows with norm below the degeneracy threshold become
    zero rows.  The zero mask is a constant of the differentiation."""
    norms = np.linalg.norm(v.data, axis=1)
    ok = norms > _DEGENERATE_NORM
    mask = ops.constant(ok.astype(np.float64)[:, None])
    # Denominator 1 on degenerate rows keeps the division defined; the mask
    # zeroes those rows afterwards.
    denom = ops.add(
        ops.reshape(ops.rownorm(v, guard=1e-300), (v.shape[0], 1)),
        ops.constant((~ok).astype(np.float64)[:, None]),
    )
    unit = ops.mul(ops.div(v, denom), mask)
    return unit, bool(ok.all())
