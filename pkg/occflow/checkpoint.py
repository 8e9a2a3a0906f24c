"""
occflow/checkpoint.py
Binary weight container.

  magic "OFK1" | u32 format version | 32-byte config digest | u32 count
  per tensor: u32 name length | name (utf-8) | u32 rank | u64 extents | f64 values

All integers and floats little-endian. The whole file is parsed before any
parameter is touched.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from occflow.errors import ContractError, CorruptionError, DimensionError, OccFlowIOError, VersionError
from occflow.nn import Module

log = logging.getLogger("occflow.checkpoint")

MAGIC          = b"OFK1"
FORMAT_VERSION = 1
DIGEST_BYTES   = 32


def encode_weights(state: Dict[str, np.ndarray], digest: bytes) -> bytes:
    if len(digest) != DIGEST_BYTES:
        raise ContractError(f"config digest must be {DIGEST_BYTES} bytes, got {len(digest)}")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), digest, struct.pack("<I", len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos  = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptionError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_weights(blob: bytes) -> Tuple[bytes, Dict[str, np.ndarray]]:
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CorruptionError("bad checkpoint magic")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CorruptionError(f"unsupported checkpoint format version {version}")
    digest     = r.take(DIGEST_BYTES)
    (count,)   = r.unpack("<I")
    state: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,)   = r.unpack("<I")
        try:
            name = r.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptionError(f"tensor name is not utf-8: {exc}") from exc
        (rank,) = r.unpack("<I")
        shape   = r.unpack(f"<{rank}Q") if rank else ()
        size    = int(np.prod(shape)) if shape else 1
        values  = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape)
        state[name] = values.astype(np.float64)
    if r.pos != len(blob):
        raise CorruptionError(f"{len(blob) - r.pos} trailing bytes after the last tensor")
    return digest, state


def save_weights(model: Module, path: str, digest: bytes) -> None:
    blob = encode_weights(model.state_dict(), digest)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise OccFlowIOError(f"cannot write checkpoint {path}: {exc}") from exc
    log.info(f"✓ Saved checkpoint {path} ({len(blob)} bytes)")


def read_weights(path: str) -> Tuple[bytes, Dict[str, np.ndarray]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OccFlowIOError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_weights(blob)


def load_weights(model: Module, path: str, digest: bytes) -> None:
    stored, state = read_weights(path)
    if stored != digest:
        raise VersionError(f"config digest mismatch: checkpoint {stored.hex()} vs model {digest.hex()}")
    try:
        model.load_state_dict(state)
    except (ContractError, DimensionError) as exc:
        raise CorruptionError(f"checkpoint does not fit the model: {exc.message}") from exc
    log.info(f"✓ Loaded checkpoint {path}")
