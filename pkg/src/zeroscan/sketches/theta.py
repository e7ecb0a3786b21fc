"""KMV-style Theta sketch for distinct counts.

The sketch keeps the ``nominal_k`` smallest distinct 64-bit hashes below a
threshold ``theta``. There is no probabilistic pre-sampling, so the state
after any sequence of updates depends only on the *set* of hashes seen. That
makes union exact: merging per-file sketches reproduces the single-pass
sketch bit for bit.
"""

from __future__ import annotations

import heapq
import struct
from typing import Any, Iterable, Sequence

import numpy as np

from ..errors import MixedParameters, TruncatedFile
from .hashing import DEFAULT_SEED, hash_value

MAX_THETA = (1 << 64) - 1
DEFAULT_K = 4096
_HEADER = struct.Struct("<IQI")


class ThetaSketch:
    __slots__ = ("nominal_k", "seed", "theta", "_entries", "_heap")

    def __init__(self, nominal_k: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> None:
        if nominal_k < 1:
            raise ValueError("nominal_k must be positive")
        self.nominal_k = nominal_k
        self.seed = seed
        self.theta = MAX_THETA
        self._entries: set[int] = set()
        self._heap: list[int] = []  # negated entries; max-heap for eviction

    # -- updates -----------------------------------------------------------

    def update(self, value: Any) -> "ThetaSketch":
        """Feed one non-null value."""
        return self.update_hash(hash_value(value, self.seed))

    def update_hash(self, h: int) -> "ThetaSketch":
        if h >= self.theta or h in self._entries:
            return self
        self._entries.add(h)
        heapq.heappush(self._heap, -h)
        if len(self._entries) > self.nominal_k:
            # the largest entry is the (k+1)-th smallest hash seen
            largest = -heapq.heappop(self._heap)
            self._entries.discard(largest)
            self.theta = largest
        return self

    def update_hashes(self, hashes: np.ndarray) -> "ThetaSketch":
        """Bulk form of ``update_hash``; same resulting state as feeding one at a time."""
        hashes = np.asarray(hashes, dtype=np.uint64)
        if self.theta != MAX_THETA:
            hashes = hashes[hashes < np.uint64(self.theta)]
        else:
            hashes = hashes[hashes != np.uint64(MAX_THETA)]
        if hashes.size == 0:
            return self
        current = np.fromiter(self._entries, dtype=np.uint64, count=len(self._entries))
        merged = np.union1d(current, hashes)
        self._set_sorted(merged)
        return self

    def _set_sorted(self, merged: np.ndarray) -> None:
        k = self.nominal_k
        if merged.size > k:
            self.theta = int(merged[k])
            merged = merged[:k]
        values = merged.tolist()
        self._entries = set(values)
        self._heap = [-v for v in values]
        heapq.heapify(self._heap)

    # -- queries -----------------------------------------------------------

    @property
    def entries(self) -> list[int]:
        return sorted(self._entries)

    @property
    def exact(self) -> bool:
        return self.theta == MAX_THETA

    @property
    def retained(self) -> int:
        return len(self._entries)

    def estimate(self) -> float:
        if self.exact:
            return float(len(self._entries))
        return len(self._entries) / (self.theta / 2.0**64)

    def is_empty(self) -> bool:
        return not self._entries and self.exact

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        entries = self.entries
        head = _HEADER.pack(self.nominal_k, self.theta, len(entries))
        return head + np.asarray(entries, dtype="<u8").tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes, seed: int = DEFAULT_SEED) -> "ThetaSketch":
        if len(payload) < _HEADER.size:
            raise TruncatedFile("theta payload shorter than its header")
        k, theta, count = _HEADER.unpack_from(payload)
        if len(payload) != _HEADER.size + 8 * count:
            raise TruncatedFile(f"theta payload holds {len(payload)} bytes, header implies {count} entries")
        s = cls(k, seed)
        s.theta = theta
        values = np.frombuffer(payload, dtype="<u8", offset=_HEADER.size, count=count).tolist()
        s._entries = set(values)
        s._heap = [-v for v in values]
        heapq.heapify(s._heap)
        return s

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ThetaSketch):
            return NotImplemented
        return (
            self.nominal_k == other.nominal_k
            and self.seed == other.seed
            and self.theta == other.theta
            and self._entries == other._entries
        )

    def __repr__(self) -> str:
        return f"ThetaSketch(k={self.nominal_k}, retained={self.retained}, estimate={self.estimate():.1f})"


def theta_update(s: ThetaSketch, value: Any) -> ThetaSketch:
    return s.update(value)


def theta_union(sketches: Sequence[ThetaSketch] | Iterable[ThetaSketch]) -> ThetaSketch:
    """Union of sketches built with the same ``nominal_k`` and seed."""
    sketches = list(sketches)
    if not sketches:
        return ThetaSketch()
    k, seed = sketches[0].nominal_k, sketches[0].seed
    for s in sketches[1:]:
        if s.nominal_k != k or s.seed != seed:
            raise MixedParameters(
                f"cannot union sketches with (k={k}, seed={seed}) and (k={s.nominal_k}, seed={s.seed})"
            )
    theta = min(s.theta for s in sketches)
    parts = [np.fromiter(s._entries, dtype=np.uint64, count=len(s._entries)) for s in sketches]
    merged = np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.uint64)
    merged = merged[merged < np.uint64(theta)] if theta != MAX_THETA else merged
    out = ThetaSketch(k, seed)
    out.theta = theta
    out._set_sorted(merged)
    return out
