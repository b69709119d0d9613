"""Minimal OBJ reader/writer.

Supported records: ``v x y z`` (optionally followed by ``r g b`` vertex
colors) and ``f i j k`` with 1-based indices.  Face entries in the
``i/t/n`` form are accepted on read; only the vertex index is used.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation, FormatError
from .topology import MeshTopology


def write_obj(path, positions, triangles, colors=None) -> None:
    positions = np.asarray(positions, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ContractViolation(f"positions must be (n, 3), got {positions.shape}")
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64)
        if colors.shape != positions.shape:
            raise ContractViolation("colors must match positions shape")
    with open(path, "w") as f:
        for i, p in enumerate(positions):
            line = f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}"
            if colors is not None:
                c = colors[i]
                line += f" {float(c[0])!r} {float(c[1])!r} {float(c[2])!r}"
            f.write(line + "\n")
        for t in triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def read_obj(path):
    """Returns (positions (n,3), topology, colors (n,3) or None)."""
    verts: list[list[float]] = []
    cols: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) not in (4, 7):
                    raise FormatError(
                        f"vertex needs 3 or 6 floats, got {len(parts) - 1}",
                        offset=lineno,
                    )
                try:
                    nums = [float(x) for x in parts[1:]]
                except ValueError:
                    raise FormatError("bad vertex float", offset=lineno) from None
                verts.append(nums[:3])
                if len(nums) == 6:
                    cols.append(nums[3:])
            elif tag == "f":
                if len(parts) != 4:
                    raise FormatError("only triangle faces supported", offset=lineno)
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise FormatError("bad face index", offset=lineno) from None
                    if k == 0:
                        raise FormatError("face indices are 1-based", offset=lineno)
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                faces.append(idx)
            # other record types (vn, vt, o, ...) are ignored
    positions = np.array(verts, dtype=np.float64).reshape(len(verts), 3)
    topology = MeshTopology(len(verts), np.array(faces, dtype=np.int64).reshape(len(faces), 3))
    colors = None
    if cols:
        if len(cols) != len(verts):
            raise FormatError(
                f"{len(cols)} colored of {len(verts)} vertices; need all or none"
            )
        colors = np.array(cols, dtype=np.float64)
    return positions, topology, colors
