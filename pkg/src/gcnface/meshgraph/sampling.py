"""Mesh coarsening by quadric edge collapse, plus the transfer operators.

Downsampling selects a subset of the original vertices (each collapse
removes one endpoint of an edge and keeps the other at its original
position), so the down operator is a pure selection matrix.  The up
operator writes each removed fine vertex as barycentric weights of its
closest point on the coarse surface; kept vertices map straight back to
themselves.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..diffcore import SparseMatrix, load_triplets, save_triplets
from ..errors import ContractViolation
from .laplacian import LaplacianPair, laplacian_pair
from .topology import MeshTopology


@dataclass(frozen=True)
class SamplingOperators:
    """Transfer operators between a fine mesh and its coarsening.

    down: (n_coarse, n_fine) selection matrix, one 1 per row.
    up:   (n_fine, n_coarse), each row at most 3 nonzeros summing to 1.
    """

    down: SparseMatrix
    up: SparseMatrix
    coarse_topology: MeshTopology
    kept: np.ndarray  # original fine indices of coarse vertices, ascending
    warnings: tuple[str, ...] = ()


def _face_quadric(p0, p1, p2) -> np.ndarray:
    normal = np.cross(p1 - p0, p2 - p0)
    area2 = np.linalg.norm(normal)
    if area2 < 1e-300:
        return np.zeros((4, 4))
    normal = normal / area2
    plane = np.array([normal[0], normal[1], normal[2], -normal @ p0])
    return np.outer(plane, plane)


def simplify(
    positions: np.ndarray, topology: MeshTopology, n_target: int
) -> tuple[np.ndarray, MeshTopology, list[str]]:
    """Collapse edges by ascending quadric cost until n_target vertices remain.

    Returns (kept original indices ascending, coarse topology, warnings).
    Collapses that merge across a non-manifold configuration are allowed
    but reported in the warnings list.
    """
    n = topology.n_vertices
    if not 4 <= n_target <= n:
        raise ContractViolation(
            f"target vertex count {n_target} outside [4, {n}]"
        )
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape != (n, 3):
        raise ContractViolation(f"positions must be ({n}, 3), got {pos.shape}")

    quadrics = np.zeros((n, 4, 4))
    faces: dict[int, tuple[int, int, int]] = {}
    vertex_faces: list[set[int]] = [set() for _ in range(n)]
    for fid, (a, b, c) in enumerate(topology.triangles):
        a, b, c = int(a), int(b), int(c)
        faces[fid] = (a, b, c)
        for v in (a, b, c):
            vertex_faces[v].add(fid)
        k = _face_quadric(pos[a], pos[b], pos[c])
        quadrics[a] += k
        quadrics[b] += k
        quadrics[c] += k

    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a, b in topology.edges():
        neighbors[int(a)].add(int(b))
        neighbors[int(b)].add(int(a))

    alive = np.ones(n, dtype=bool)
    version = np.zeros(n, dtype=np.int64)
    counter = itertools.count()
    heap: list[tuple[float, int, int, int, int, int]] = []

    def collapse_cost(remove: int, keep: int) -> float:
        h = np.array([pos[keep, 0], pos[keep, 1], pos[keep, 2], 1.0])
        q = quadrics[remove] + quadrics[keep]
        return float(h @ q @ h)

    def push_edge(a: int, b: int) -> None:
        # Both collapse directions are candidates.
        for remove, keep in ((a, b), (b, a)):
            heapq.heappush(
                heap,
                (
                    collapse_cost(remove, keep),
                    next(counter),
                    remove,
                    keep,
                    int(version[remove]),
                    int(version[keep]),
                ),
            )

    for a, b in topology.edges():
        push_edge(int(a), int(b))

    warnings: list[str] = []
    n_alive = n
    while n_alive > n_target:
        if not heap:
            raise ContractViolation(
                f"ran out of collapsible edges at {n_alive} vertices "
                f"(target {n_target})"
            )
        cost, _, rem, keep, vr, vk = heapq.heappop(heap)
        if not (alive[rem] and alive[keep]):
            continue
        if version[rem] != vr or version[keep] != vk:
            continue
        if keep not in neighbors[rem]:
            continue

        shared = neighbors[rem] & neighbors[keep]
        if len(shared) != 2:
            warnings.append(
                f"non-manifold collapse {rem}->{keep} (link size {len(shared)})"
            )

        # Rewrite faces around the removed vertex.
        for fid in list(vertex_faces[rem]):
            tri = faces[fid]
            if keep in tri:
                # Degenerates to an edge: drop it.
                for v in tri:
                    vertex_faces[v].discard(fid)
                del faces[fid]
            else:
                new_tri = tuple(keep if v == rem else v for v in tri)
                faces[fid] = new_tri
                vertex_faces[rem].discard(fid)
                vertex_faces[keep].add(fid)

        for nb in neighbors[rem]:
            neighbors[nb].discard(rem)
            if nb != keep:
                neighbors[nb].add(keep)
                neighbors[keep].add(nb)
        neighbors[rem].clear()

        quadrics[keep] += quadrics[rem]
        alive[rem] = False
        n_alive -= 1
        version[rem] += 1
        version[keep] += 1
        for nb in neighbors[keep]:
            version[nb] += 1
        # Refresh candidate costs around the surviving vertex.
        for nb in sorted(neighbors[keep]):
            push_edge(keep, nb)
        for nb in sorted(neighbors[keep]):
            for nb2 in sorted(neighbors[nb]):
                if nb2 != keep and alive[nb2]:
                    push_edge(nb, nb2)

    kept = np.flatnonzero(alive)
    remap = -np.ones(n, dtype=np.int64)
    remap[kept] = np.arange(len(kept))

    seen: set[tuple[int, int, int]] = set()
    coarse_tris = []
    for fid in sorted(faces):
        tri = faces[fid]
        mapped = tuple(int(remap[v]) for v in tri)
        key = tuple(sorted(mapped))
        if key in seen:
            warnings.append(f"dropped duplicate face {mapped}")
            continue
        seen.add(key)
        coarse_tris.append(mapped)
    coarse_topology = MeshTopology(len(kept), np.array(coarse_tris, dtype=np.int64))
    return kept, coarse_topology, warnings


def _closest_point_weights(p: np.ndarray, tri_pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric weights of the closest point to p on each triangle.

    tri_pos is (m, 3, 3).  Returns (weights (m, 3), squared distances (m,)).
    Vectorized form of the standard region-classification algorithm.
    """
    a, b, c = tri_pos[:, 0], tri_pos[:, 1], tri_pos[:, 2]
    ab, ac = b - a, c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    m = len(tri_pos)
    w = np.zeros((m, 3))
    done = np.zeros(m, dtype=bool)

    def settle(mask, wa, wb, wc):
        mask = mask & ~done
        w[mask, 0] = np.broadcast_to(wa, (m,))[mask] if np.ndim(wa) else wa
        w[mask, 1] = np.broadcast_to(wb, (m,))[mask] if np.ndim(wb) else wb
        w[mask, 2] = np.broadcast_to(wc, (m,))[mask] if np.ndim(wc) else wc
        done[mask] = True

    settle((d1 <= 0) & (d2 <= 0), 1.0, 0.0, 0.0)
    settle((d3 >= 0) & (d4 <= d3), 0.0, 1.0, 0.0)
    settle((d6 >= 0) & (d5 <= d6), 0.0, 0.0, 1.0)

    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 != 0, d1 - d3, 1.0), 0.0)
    settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1.0 - v_ab, v_ab, 0.0)

    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        w_ac = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 != 0, d2 - d6, 1.0), 0.0)
    settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1.0 - w_ac, 0.0, w_ac)

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_bc = np.where(denom_bc != 0, (d4 - d3) / np.where(denom_bc != 0, denom_bc, 1.0), 0.0)
    settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 0.0, 1.0 - w_bc, w_bc)

    total = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(total != 0, 1.0 / np.where(total != 0, total, 1.0), 0.0)
    settle(~done, 1.0 - (vb * inv + vc * inv), vb * inv, vc * inv)

    points = w[:, 0, None] * a + w[:, 1, None] * b + w[:, 2, None] * c
    dist2 = np.einsum("ij,ij->i", points - p, points - p)
    return w, dist2


def build_sampling(
    positions: np.ndarray, topology: MeshTopology, target_fraction: float
) -> SamplingOperators:
    """Coarsen a mesh to ceil(n * target_fraction) vertices.

    A fraction high enough to remove nothing yields identity operators.
    Fewer than 4 surviving vertices is an error.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise ContractViolation(f"target_fraction {target_fraction} outside (0, 1]")
    n = topology.n_vertices
    n_target = int(np.ceil(n * target_fraction))
    if n_target < 4:
        raise ContractViolation(
            f"coarsening to {n_target} vertices; meshes need at least 4"
        )
    if n_target == n:
        ident = SparseMatrix.identity(n)
        return SamplingOperators(
            down=ident,
            up=SparseMatrix.identity(n),
            coarse_topology=MeshTopology(n, topology.triangles.copy()),
            kept=np.arange(n),
        )

    kept, coarse_topology, warnings = simplify(positions, topology, n_target)
    nc = len(kept)

    down = SparseMatrix(nc, n, np.arange(nc), kept, np.ones(nc))

    coarse_pos = positions[kept]
    tri_pos = coarse_pos[coarse_topology.triangles]  # (m, 3, 3)
    up_rows, up_cols, up_vals = [], [], []
    coarse_of = {int(orig): ci for ci, orig in enumerate(kept)}
    removed = np.flatnonzero(~np.isin(np.arange(n), kept))
    for v in range(n):
        if v in coarse_of:
            up_rows.append(v)
            up_cols.append(coarse_of[v])
            up_vals.append(1.0)
    for v in removed:
        weights, dist2 = _closest_point_weights(positions[v], tri_pos)
        best = int(np.argmin(dist2))
        tri = coarse_topology.triangles[best]
        w = np.clip(weights[best], 0.0, None)
        w = w / w.sum()
        for ci, wi in zip(tri, w):
            if wi > 0.0:
                up_rows.append(int(v))
                up_cols.append(int(ci))
                up_vals.append(float(wi))
    up = SparseMatrix(n, nc, up_rows, up_cols, up_vals)
    return SamplingOperators(
        down=down,
        up=up,
        coarse_topology=coarse_topology,
        kept=kept,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class HierarchyLevel:
    topology: MeshTopology
    positions: np.ndarray
    lap: LaplacianPair


@dataclass(frozen=True)
class MeshHierarchy:
    """Mesh pyramid: levels[0] is the finest; samplings[i] connects
    levels[i] to levels[i+1]."""

    levels: tuple[HierarchyLevel, ...]
    samplings: tuple[SamplingOperators, ...]

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def build_hierarchy(
    positions: np.ndarray,
    topology: MeshTopology,
    n_levels: int = 4,
    fraction: float = 0.25,
    lambda_max_mode: str = "power",
) -> MeshHierarchy:
    if n_levels < 1:
        raise ContractViolation("hierarchy needs at least one level")
    levels = [
        HierarchyLevel(topology, np.asarray(positions, dtype=np.float64),
                       laplacian_pair(topology, lambda_max_mode))
    ]
    samplings = []
    for _ in range(n_levels - 1):
        cur = levels[-1]
        samp = build_sampling(cur.positions, cur.topology, fraction)
        coarse_pos = cur.positions[samp.kept]
        levels.append(
            HierarchyLevel(samp.coarse_topology, coarse_pos,
                           laplacian_pair(samp.coarse_topology, lambda_max_mode))
        )
        samplings.append(samp)
    return MeshHierarchy(tuple(levels), tuple(samplings))


def save_sampling(prefix: str, operators: SamplingOperators) -> None:
    """Write the two transfer matrices as '<prefix>.down.txt' and
    '<prefix>.up.txt' in the sparse triplet text format."""
    save_triplets(f"{prefix}.down.txt", operators.down)
    save_triplets(f"{prefix}.up.txt", operators.up)


def load_sampling_matrices(prefix: str) -> tuple[SparseMatrix, SparseMatrix]:
    return load_triplets(f"{prefix}.down.txt"), load_triplets(f"{prefix}.up.txt")
