"""Mesh connectivity, graph Laplacians, coarsening hierarchies, OBJ I/O."""

from .laplacian import (
    LaplacianPair,
    laplacian_pair,
    max_eigenvalue,
    normalized_laplacian,
    scaled_laplacian,
)
from .obj_io import read_obj, write_obj
from .sampling import (
    HierarchyLevel,
    MeshHierarchy,
    SamplingOperators,
    build_hierarchy,
    build_sampling,
    load_sampling_matrices,
    save_sampling,
    simplify,
)
from .topology import MeshTopology, build_adjacency, icosphere, vertex_normals

__all__ = [
    "LaplacianPair",
    "laplacian_pair",
    "max_eigenvalue",
    "normalized_laplacian",
    "scaled_laplacian",
    "read_obj",
    "write_obj",
    "HierarchyLevel",
    "MeshHierarchy",
    "SamplingOperators",
    "build_hierarchy",
    "build_sampling",
    "load_sampling_matrices",
    "save_sampling",
    "simplify",
    "MeshTopology",
    "build_adjacency",
    "icosphere",
    "vertex_normals",
]
