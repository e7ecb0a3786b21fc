"""``.zsb`` sketch sidecar files.

Layout (little-endian)::

    magic "ZSB1" | version u8 = 1 | seed u64 | blob_count u32
    blob_count x ( type u8 | column_id u32 | length u32 | payload[length] )

Blob types: 1 = Theta, 2 = KLL. A reader can fetch one blob by walking the
blob headers and seeking past the other payloads.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional

from ..errors import BadMagic, DuplicateBlob, TruncatedFile
from .hashing import DEFAULT_SEED
from .kll import KllSketch
from .theta import ThetaSketch

MAGIC = b"ZSB1"
VERSION = 1
_FILE_HEADER = struct.Struct("<4sBQI")
_BLOB_HEADER = struct.Struct("<BII")


class BlobType(IntEnum):
    THETA = 1
    KLL = 2


@dataclass
class Blob:
    blob_type: BlobType
    column_id: int
    payload: bytes


@dataclass
class SketchSidecar:
    seed: int = DEFAULT_SEED
    blobs: list[Blob] = field(default_factory=list)

    def add(self, blob_type: BlobType, column_id: int, payload: bytes) -> None:
        if self.find(blob_type, column_id) is not None:
            raise DuplicateBlob(f"duplicate blob (type={int(blob_type)}, column={column_id})")
        self.blobs.append(Blob(BlobType(blob_type), column_id, payload))

    def add_theta(self, column_id: int, sketch: ThetaSketch) -> None:
        self.add(BlobType.THETA, column_id, sketch.to_bytes())

    def add_kll(self, column_id: int, sketch: KllSketch) -> None:
        self.add(BlobType.KLL, column_id, sketch.to_bytes())

    def find(self, blob_type: BlobType, column_id: int) -> Optional[Blob]:
        for b in self.blobs:
            if b.blob_type == blob_type and b.column_id == column_id:
                return b
        return None

    def theta(self, column_id: int) -> Optional[ThetaSketch]:
        b = self.find(BlobType.THETA, column_id)
        return None if b is None else ThetaSketch.from_bytes(b.payload, self.seed)

    def kll(self, column_id: int) -> Optional[KllSketch]:
        b = self.find(BlobType.KLL, column_id)
        return None if b is None else KllSketch.from_bytes(b.payload)

    def to_bytes(self) -> bytes:
        seen = set()
        parts = [_FILE_HEADER.pack(MAGIC, VERSION, self.seed, len(self.blobs))]
        for b in self.blobs:
            key = (int(b.blob_type), b.column_id)
            if key in seen:
                raise DuplicateBlob(f"duplicate blob (type={key[0]}, column={key[1]})")
            seen.add(key)
            parts.append(_BLOB_HEADER.pack(int(b.blob_type), b.column_id, len(b.payload)))
            parts.append(b.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SketchSidecar":
        seed, count = _parse_header(data)
        out = cls(seed=seed)
        pos = _FILE_HEADER.size
        for _ in range(count):
            if pos + _BLOB_HEADER.size > len(data):
                raise TruncatedFile("sidecar ends inside a blob header")
            btype, column_id, length = _BLOB_HEADER.unpack_from(data, pos)
            pos += _BLOB_HEADER.size
            if pos + length > len(data):
                raise TruncatedFile("sidecar ends inside a blob payload")
            out.add(BlobType(btype), column_id, bytes(data[pos : pos + length]))
            pos += length
        if pos != len(data):
            raise TruncatedFile(f"{len(data) - pos} trailing bytes after last blob")
        return out


def _parse_header(data: bytes) -> tuple[int, int]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a ZSB1 sidecar")
    if len(data) < _FILE_HEADER.size:
        raise TruncatedFile("sidecar shorter than its header")
    _, version, seed, count = _FILE_HEADER.unpack_from(data)
    if version != VERSION:
        raise BadMagic(f"unsupported sidecar version {version}")
    return seed, count


def sidecar_write(path: str | Path, sidecar: SketchSidecar) -> None:
    data = sidecar.to_bytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def sidecar_read(path: str | Path) -> SketchSidecar:
    with open(path, "rb") as f:
        return SketchSidecar.from_bytes(f.read())


def sidecar_read_blob(path: str | Path, blob_type: BlobType, column_id: int) -> tuple[int, Optional[bytes]]:
    """Return ``(seed, payload)`` for one blob, seeking past all others."""
    with open(path, "rb") as f:
        head = f.read(_FILE_HEADER.size)
        seed, count = _parse_header(head)
        size = os.fstat(f.fileno()).st_size
        pos = _FILE_HEADER.size
        for _ in range(count):
            raw = f.read(_BLOB_HEADER.size)
            if len(raw) < _BLOB_HEADER.size:
                raise TruncatedFile("sidecar ends inside a blob header")
            btype, cid, length = _BLOB_HEADER.unpack(raw)
            pos += _BLOB_HEADER.size
            if pos + length > size:
                raise TruncatedFile("sidecar ends inside a blob payload")
            if btype == int(blob_type) and cid == column_id:
                return seed, f.read(length)
            f.seek(length, os.SEEK_CUR)
            pos += length
    return seed, None


def load_theta(path: str | Path, column_id: int) -> Optional[ThetaSketch]:
    seed, payload = sidecar_read_blob(path, BlobType.THETA, column_id)
    return None if payload is None else ThetaSketch.from_bytes(payload, seed)


def load_kll(path: str | Path, column_id: int) -> Optional[KllSketch]:
    _, payload = sidecar_read_blob(path, BlobType.KLL, column_id)
    return None if payload is None else KllSketch.from_bytes(payload)
