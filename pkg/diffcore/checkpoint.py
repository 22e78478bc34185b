# diffcore/checkpoint.py
"""
Binary tensor records.

  magic "WOGC" | u16 version |
  repeated until EOF:
    u32 name length | UTF-8 name | u32 rank | rank x u64 dims | f64 payload
All integers and floats little-endian. Metadata lives in a JSON sidecar
next to the record file (`<file>.json`).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np
import structlog

import config.settings as settings

log = structlog.get_logger(__name__)

PathLike = Union[str, Path]


class CheckpointFormatError(ValueError):
    """Bad magic, unsupported version, or a truncated record."""


def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_tensors(path: PathLike, tensors: Mapping[str, np.ndarray]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    chunks = [settings.CHECKPOINT_MAGIC, struct.pack("<H", settings.CHECKPOINT_VERSION)]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(p)
    log.debug("tensors written", path=str(p), count=len(tensors))
    return p


def _take(buf: bytes, pos: int, n: int, what: str, path: Path) -> bytes:
    if pos + n > len(buf):
        raise CheckpointFormatError(f"{path}: truncated while reading {what} at byte {pos}")
    return buf[pos:pos + n]


def read_tensors(path: PathLike) -> Dict[str, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise CheckpointFormatError(f"checkpoint not found: {p}")
    buf = p.read_bytes()
    magic = settings.CHECKPOINT_MAGIC
    if buf[:len(magic)] != magic:
        raise CheckpointFormatError(f"{p}: bad magic {buf[:len(magic)]!r}")
    pos = len(magic)
    (version,) = struct.unpack("<H", _take(buf, pos, 2, "version", p))
    if version != settings.CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{p}: unsupported version {version}")
    pos += 2

    out: Dict[str, np.ndarray] = {}
    while pos < len(buf):
        (name_len,) = struct.unpack("<I", _take(buf, pos, 4, "name length", p))
        pos += 4
        name = _take(buf, pos, name_len, "name", p).decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack("<I", _take(buf, pos, 4, "rank", p))
        pos += 4
        dims = struct.unpack(f"<{rank}Q", _take(buf, pos, 8 * rank, "dims", p))
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        payload = _take(buf, pos, 8 * count, f"payload of {name!r}", p)
        pos += 8 * count
        if name in out:
            raise CheckpointFormatError(f"{p}: duplicate tensor {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return out


def write_sidecar(path: PathLike, meta: Mapping[str, Any]) -> Path:
    sc = sidecar_path(path)
    sc.parent.mkdir(parents=True, exist_ok=True)
    sc.write_text(json.dumps(dict(meta), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return sc


def read_sidecar(path: PathLike) -> Dict[str, Any]:
    sc = sidecar_path(path)
    if not sc.exists():
        raise CheckpointFormatError(f"metadata sidecar not found: {sc}")
    try:
        return json.loads(sc.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointFormatError(f"{sc}: line {e.lineno}: {e.msg}") from e


__all__ = [
    "CheckpointFormatError",
    "sidecar_path",
    "write_tensors",
    "read_tensors",
    "write_sidecar",
    "read_sidecar",
]
