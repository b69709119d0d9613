"""Versioned binary container of named float64 tensors.

Layout, all little-endian:

    8 bytes   magic "GCNTENS" + format version byte
    u32       entry count
    per entry:
        u16       name length in bytes, then the UTF-8 name
        u8        rank
        rank*u32  dimensions
        raw       C-order float64 data

Entries are written in sorted name order, so identical mappings produce
identical files byte for byte.  The same container backs checkpoints and
dataset files; checkpoints add a small naming convention on top:
``meta.step`` (a single float), ``gen.*`` and ``critic.*`` parameter
tensors, and ``opt.gen.*`` / ``opt.critic.*`` optimizer state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError

_MAGIC = b"GCNTENS\x01"


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [_MAGIC, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:40]!r}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}", offset=0)
    pos = 8

    def need(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise FormatError(f"{path}: truncated container", offset=pos)
        piece = blob[pos:pos + count]
        pos += count
        return piece

    (count,) = struct.unpack("<I", need(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", need(2))
        name = need(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", need(1))
        shape = struct.unpack(f"<{rank}I", need(4 * rank)) if rank else ()
        n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(need(8 * n_items), dtype="<f8")
        out[name] = data.reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes", offset=pos)
    return out


@dataclass(frozen=True)
class Checkpoint:
    step: int
    generator: dict[str, np.ndarray]
    critic: dict[str, np.ndarray]
    opt_generator: dict[str, np.ndarray]
    opt_critic: dict[str, np.ndarray]


def save_checkpoint(
    path,
    step: int,
    generator: dict[str, np.ndarray],
    critic: dict[str, np.ndarray],
    opt_generator: dict[str, np.ndarray],
    opt_critic: dict[str, np.ndarray],
) -> None:
    tensors = {"meta.step": np.array([float(step)])}
    for prefix, group in (
        ("gen", generator),
        ("critic", critic),
        ("opt.gen", opt_generator),
        ("opt.critic", opt_critic),
    ):
        for name, arr in group.items():
            tensors[f"{prefix}.{name}"] = arr
    save_tensors(path, tensors)


def _strip(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    cut = len(prefix)
    return {k[cut:]: v for k, v in tensors.items() if k.startswith(prefix)}


def load_checkpoint(path) -> Checkpoint:
    tensors = load_tensors(path)
    if "meta.step" not in tensors:
        raise FormatError(f"{path}: missing meta.step entry")
    return Checkpoint(
        step=int(tensors["meta.step"][0]),
        generator=_strip(tensors, "gen."),
        critic={k: v for k, v in _strip(tensors, "critic.").items()},
        opt_generator=_strip(tensors, "opt.gen."),
        opt_critic=_strip(tensors, "opt.critic."),
    )
