"""KLL quantile sketch with deterministic compaction.

Level ``h`` holds items of weight ``2**h``. Level capacities shrink
geometrically (factor 2/3) away from the top level, giving roughly ``3k``
retained items in total. When the sketch is full the lowest over-capacity
level is sorted and halved: even-indexed survivors on that level's even
compactions, odd-indexed on odd ones. No RNG is involved, so equal inputs
always give equal sketches.
"""

from __future__ import annotations

import bisect
import math
import struct
from itertools import accumulate
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptySketch, MixedParameters, NonFiniteValue, TruncatedFile

DEFAULT_K = 200
CAPACITY_DECAY = 2.0 / 3.0
MIN_LEVEL_CAPACITY = 2
# normalized rank error for k=200
RANK_EPSILON = 0.0165

_HEADER = struct.Struct("<IQddB")
_COUNT = struct.Struct("<I")


class KllSketch:
    __slots__ = ("k", "n", "levels", "min_item", "max_item", "_compactions", "_capacity_cache", "_cdf")

    def __init__(self, k: int = DEFAULT_K) -> None:
        if k < 8:
            raise ValueError("k must be at least 8")
        self.k = k
        self.n = 0
        self.levels: list[list[float]] = [[]]
        self.min_item = math.inf
        self.max_item = -math.inf
        # compaction parity per level; in-memory only, not part of the wire format
        self._compactions: list[int] = [0]
        self._capacity_cache: tuple[int, list[int]] = (0, [])
        self._cdf = None

    # -- capacity ----------------------------------------------------------

    def _capacities(self) -> list[int]:
        height = len(self.levels)
        if self._capacity_cache[0] != height:
            caps = [
                max(MIN_LEVEL_CAPACITY, math.ceil(self.k * CAPACITY_DECAY ** (height - h - 1)))
                for h in range(height)
            ]
            self._capacity_cache = (height, caps)
        return self._capacity_cache[1]

    def _max_size(self) -> int:
        return sum(self._capacities())

    def _size(self) -> int:
        return sum(len(level) for level in self.levels)

    # -- updates -----------------------------------------------------------

    def update(self, value: float) -> "KllSketch":
        v = float(value)
        if not math.isfinite(v):
            raise NonFiniteValue(f"KLL sketches accept finite values only, got {value!r}")
        self._cdf = None
        self.n += 1
        if v < self.min_item:
            self.min_item = v
        if v > self.max_item:
            self.max_item = v
        self.levels[0].append(v)
        if self._size() >= self._max_size():
            self._compress()
        return self

    def update_many(self, values: Iterable[float] | np.ndarray) -> "KllSketch":
        """Feed many values; the resulting state equals repeated ``update`` calls."""
        arr = np.asarray(values, dtype=np.float64).ravel()
        if arr.size == 0:
            return self
        if not np.isfinite(arr).all():
            raise NonFiniteValue("KLL sketches accept finite values only")
        self._cdf = None
        self.min_item = min(self.min_item, float(arr.min()))
        self.max_item = max(self.max_item, float(arr.max()))
        items = arr.tolist()
        pos = 0
        total = len(items)
        size = self._size()
        while pos < total:
            room = self._max_size() - size
            take = min(room, total - pos)
            self.levels[0].extend(items[pos : pos + take])
            self.n += take
            pos += take
            size += take
            if size >= self._max_size():
                self._compress()
                size = self._size()
        return self

    def _compress(self) -> None:
        while self._size() >= self._max_size():
            caps = self._capacities()
            for h, level in enumerate(self.levels):
                if len(level) >= caps[h]:
                    self._compact_level(h)
                    break
            else:  # pragma: no cover - capacities always sum to max size
                raise AssertionError("no compactable level")

    def _compact_level(self, h: int) -> None:
        if h + 1 == len(self.levels):
            self.levels.append([])
            self._compactions.append(0)
        level = self.levels[h]
        level.sort()
        leftover = level.pop() if len(level) % 2 else None
        offset = self._compactions[h] % 2
        self.levels[h + 1].extend(level[offset::2])
        self._compactions[h] += 1
        level.clear()
        if leftover is not None:
            level.append(leftover)

    # -- merge -------------------------------------------------------------

    def merge(self, other: "KllSketch") -> "KllSketch":
        """Return a new sketch summarizing both inputs; inputs are left untouched."""
        if other.k != self.k:
            raise MixedParameters(f"cannot merge KLL sketches with k={self.k} and k={other.k}")
        out = KllSketch(self.k)
        height = max(len(self.levels), len(other.levels))
        out.levels = [[] for _ in range(height)]
        out._compactions = [0] * height
        for src in (self, other):
            for h, level in enumerate(src.levels):
                out.levels[h].extend(level)
                out._compactions[h] += src._compactions[h]
        out.n = self.n + other.n
        out.min_item = min(self.min_item, other.min_item)
        out.max_item = max(self.max_item, other.max_item)
        out._compress()
        return out

    # -- queries -----------------------------------------------------------

    def is_empty(self) -> bool:
        return self.n == 0

    @property
    def retained(self) -> int:
        return self._size()

    @property
    def exact(self) -> bool:
        """True while no compaction has discarded anything."""
        return len(self.levels) == 1

    def _sorted_view(self) -> tuple[list[float], list[int]]:
        if self._cdf is None:
            pairs = sorted((v, 1 << h) for h, level in enumerate(self.levels) for v in level)
            items = [p[0] for p in pairs]
            cum = list(accumulate(p[1] for p in pairs))
            self._cdf = (items, cum)
        return self._cdf

    def quantile(self, q: float) -> float:
        if self.n == 0:
            raise EmptySketch("quantile of an empty sketch")
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must be in [0, 1]")
        if q == 0.0:
            return self.min_item
        if q == 1.0:
            return self.max_item
        items, cum = self._sorted_view()
        idx = bisect.bisect_left(cum, q * self.n)
        return items[min(idx, len(items) - 1)]

    def rank(self, value: float) -> float:
        """Fraction of the stream strictly below ``value``; ``max_item`` maps to 1."""
        if self.n == 0:
            raise EmptySketch("rank of an empty sketch")
        if value <= self.min_item:
            return 0.0
        if value >= self.max_item:
            return 1.0
        items, cum = self._sorted_view()
        idx = bisect.bisect_left(items, value)
        return (cum[idx - 1] if idx else 0) / self.n

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        mn = self.min_item if self.n else 0.0
        mx = self.max_item if self.n else 0.0
        parts = [_HEADER.pack(self.k, self.n, mn, mx, len(self.levels))]
        for level in self.levels:
            parts.append(_COUNT.pack(len(level)))
            parts.append(struct.pack(f"<{len(level)}d", *level))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "KllSketch":
        if len(payload) < _HEADER.size:
            raise TruncatedFile("KLL payload shorter than its header")
        k, n, mn, mx, height = _HEADER.unpack_from(payload)
        s = cls(k)
        s.n = n
        s.min_item = mn if n else math.inf
        s.max_item = mx if n else -math.inf
        pos = _HEADER.size
        levels = []
        for _ in range(height):
            if pos + _COUNT.size > len(payload):
                raise TruncatedFile("KLL payload ends inside a level header")
            (count,) = _COUNT.unpack_from(payload, pos)
            pos += _COUNT.size
            end = pos + 8 * count
            if end > len(payload):
                raise TruncatedFile("KLL payload ends inside a level")
            levels.append(list(struct.unpack_from(f"<{count}d", payload, pos)))
            pos = end
        if pos != len(payload):
            raise TruncatedFile("trailing bytes after KLL levels")
        s.levels = levels or [[]]
        s._compactions = [0] * len(s.levels)
        return s

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KllSketch):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __repr__(self) -> str:
        return f"KllSketch(k={self.k}, n={self.n}, retained={self.retained}, levels={len(self.levels)})"


def kll_update(s: KllSketch, value: float) -> KllSketch:
    return s.update(value)


def kll_merge(a: KllSketch, b: KllSketch) -> KllSketch:
    return a.merge(b)


def kll_merge_all(sketches: Sequence[KllSketch], k: int = DEFAULT_K) -> KllSketch:
    out = KllSketch(k)
    for s in sketches:
        out = out.merge(s)
    return out


def kll_quantile(s: KllSketch, q: float) -> float:
    return s.quantile(q)


def kll_rank(s: KllSketch, value: float) -> float:
    return s.rank(value)
