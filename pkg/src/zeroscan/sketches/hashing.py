"""64-bit value hash: FNV-1a over canonical bytes, finished with a splitmix64 mix.

Scalar and numpy-vectorized forms produce identical results; the vectorized
ones are what the write path uses for whole columns.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from ..values import canonical_bytes

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEFAULT_SEED = 9001


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK64
    return h


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash_bytes(data: bytes, seed: int = DEFAULT_SEED) -> int:
    return mix64((fnv1a64(data) + seed * GOLDEN_GAMMA) & MASK64)


def hash_value(value: Any, seed: int = DEFAULT_SEED) -> int:
    return hash_bytes(canonical_bytes(value), seed)


# -- vectorized -------------------------------------------------------------

_U = np.uint64


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def _finish(h: np.ndarray, seed: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _mix64_np(h + _U((seed * GOLDEN_GAMMA) & MASK64))


def hash_int64_array(values: np.ndarray, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Hash int64 values via their 8-byte big-endian two's-complement encoding."""
    v = np.asarray(values, dtype=np.int64).view(np.uint64)
    h = np.full(v.shape, FNV_OFFSET, dtype=np.uint64)
    prime = _U(FNV_PRIME)
    with np.errstate(over="ignore"):
        for shift in range(56, -8, -8):
            h ^= (v >> _U(shift)) & _U(0xFF)
            h *= prime
    return _finish(h, seed)


def hash_float64_array(values: np.ndarray, seed: int = DEFAULT_SEED) -> np.ndarray:
    v = np.array(values, dtype=np.float64)
    v[v == 0.0] = 0.0
    bits = v.view(np.int64).copy()
    bits[np.isnan(v)] = 0x7FF8000000000000
    return hash_int64_array(bits, seed)


def hash_string_array(values: Sequence[str], seed: int = DEFAULT_SEED) -> np.ndarray:
    """Hash UTF-8 strings; variable lengths handled with a padded byte matrix."""
    n = len(values)
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    encoded = [s.encode("utf-8") for s in values]
    lengths = np.fromiter((len(b) for b in encoded), dtype=np.int64, count=n)
    width = int(lengths.max()) if n else 0
    h = np.full(n, FNV_OFFSET, dtype=np.uint64)
    if width:
        flat = np.frombuffer(b"".join(b.ljust(width, b"\0") for b in encoded), dtype=np.uint8)
        matrix = flat.reshape(n, width)
        prime = _U(FNV_PRIME)
        with np.errstate(over="ignore"):
            for j in range(width):
                active = lengths > j
                step = (h ^ matrix[:, j].astype(np.uint64)) * prime
                h = np.where(active, step, h)
    return _finish(h, seed)


def hash_bool_array(values: Sequence[bool], seed: int = DEFAULT_SEED) -> np.ndarray:
    return np.array([hash_value(bool(v), seed) for v in values], dtype=np.uint64)
