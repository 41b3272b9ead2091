"""On-disk embedding cache: one ``.embd`` file per (dataset, encoder, preprocess).

Byte layout, all integers little-endian (documented so other runtimes can
read and write the same files bit-for-bit):

====================  =======================================================
offset / field        contents
====================  =======================================================
magic                 4 bytes ``EMBD``
version               u16, currently 1
n, d                  u32 row count, u32 embedding width
metadata              u32 byte length of encoder id, UTF-8 encoder id,
                      u64 preprocess hash,
                      then n times (u32 byte length, UTF-8 sample id)
payload               n * d float32 values, row-major
checksum              u64: first 8 bytes (as LE u64) of the SHA-256 digest of
                      every byte from offset 0 through the end of the payload
====================  =======================================================

Files are immutable once written (writes go through a temp file + rename),
so concurrent readers are safe; a truncated or bit-flipped file fails the
checksum, never yielding a silently short matrix.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, ValidationError

MAGIC = b"EMBD"
VERSION = 1


class CacheFormatError(DataError):
    """Not an embedding cache file (bad magic)."""


class CacheVersionError(DataError):
    """Cache file uses an unsupported format version."""


class CacheChecksumError(DataError):
    """Cache file is truncated or corrupted."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    data: np.ndarray
    sample_ids: tuple[str, ...]
    encoder_id: str
    preprocess_hash: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValidationError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        ids = tuple(self.sample_ids)
        if len(ids) != arr.shape[0]:
            raise ValidationError(
                f"{len(ids)} sample ids for {arr.shape[0]} embedding rows"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("sample ids must be unique")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "preprocess_hash", int(self.preprocess_hash) & (1 << 64) - 1)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_embeddings(cls, embeddings, encoder_id: str, preprocess_hash: int) -> "EmbeddingMatrix":
        if not embeddings:
            raise ValidationError("cannot build a matrix from zero embeddings")
        data = np.stack([e.vector for e in embeddings]).astype(np.float32)
        ids = tuple(e.sample_id for e in embeddings)
        return cls(data, ids, encoder_id, preprocess_hash)

    def rows_for(self, ids: Sequence[str]) -> np.ndarray:
        """Rows re-ordered to match ``ids``; raises on unknown ids."""
        index = {sid: i for i, sid in enumerate(self.sample_ids)}
        try:
            picks = [index[sid] for sid in ids]
        except KeyError as exc:
            raise ValidationError(f"sample id {exc.args[0]!r} not present in cache") from None
        return self.data[picks]


def _checksum(blob: bytes) -> int:
    return struct.unpack("<Q", hashlib.sha256(blob).digest()[:8])[0]


def write_cache(matrix: EmbeddingMatrix, path: str | Path) -> int:
    """Write ``matrix`` to ``path`` atomically; returns the stored checksum."""
    path = Path(path)
    n, d = matrix.data.shape
    parts = [MAGIC, struct.pack("<HII", VERSION, n, d)]
    enc = matrix.encoder_id.encode("utf-8")
    parts.append(struct.pack("<I", len(enc)))
    parts.append(enc)
    parts.append(struct.pack("<Q", matrix.preprocess_hash))
    for sid in matrix.sample_ids:
        raw = sid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    parts.append(matrix.data.astype("<f4", copy=False).tobytes())
    blob = b"".join(parts)
    checksum = _checksum(blob)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<Q", checksum))
    os.replace(tmp, path)
    return checksum


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise CacheChecksumError(
                f"cache file truncated: wanted {count} bytes at offset {self.pos}, "
                f"file holds {len(self.blob)}"
            )
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_cache(path: str | Path) -> EmbeddingMatrix:
    """Read and verify a cache file written by :func:`write_cache`."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CacheFormatError(f"{path}: not an embedding cache (bad magic)")
    (version,) = struct.unpack("<H", r.take(2))
    if version != VERSION:
        raise CacheVersionError(f"{path}: version {version}, this reader supports {VERSION}")
    n = r.u32()
    d = r.u32()
    encoder_id = r.take(r.u32()).decode("utf-8")
    (preprocess_hash,) = struct.unpack("<Q", r.take(8))
    ids = tuple(r.take(r.u32()).decode("utf-8") for _ in range(n))
    payload = r.take(n * d * 4)
    (stored,) = struct.unpack("<Q", r.take(8))
    if r.pos != len(blob):
        raise CacheChecksumError(f"{path}: {len(blob) - r.pos} trailing bytes")
    if _checksum(blob[: len(blob) - 8]) != stored:
        raise CacheChecksumError(f"{path}: checksum mismatch")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float32)
    return EmbeddingMatrix(data, ids, encoder_id, preprocess_hash)
