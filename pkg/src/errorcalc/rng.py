"""Counter-based random streams.

All randomness comes from Philox4x64-10 (Salmon et al., Random123), through
``numpy.random.Philox`` with an explicit 128-bit key ``(seed, stream)`` and
the default zero counter (numpy increments it before each block, so the
first block is computed at counter 1).  Only ``random_raw`` output is consumed, so
every derived number below is fixed by the Philox reference algorithm plus
the transforms in this module, not by numpy's ``Generator`` methods (whose
streams numpy reserves the right to change).

Stream ids pack a purpose tag into the high 16 bits and a chunk or sequence
index into the low 48 bits, so streams for different purposes never collide.
Work is split into fixed chunks of :data:`CHUNK` draws, each with its own
stream; concatenating chunks in index order gives output that does not
depend on how many workers produced them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

GENERATOR_NAME = "philox4x64-10"
CHUNK = 1 << 16

PURPOSE_BASE_LAW = 1
PURPOSE_PERTURBATION = 2
PURPOSE_BITS = 3
PURPOSE_ENSEMBLE = 4

_MASK64 = (1 << 64) - 1
_TWO_POW_M53 = 2.0**-53

T = TypeVar("T")


def stream_id(purpose: int, index: int) -> int:
    if not 0 <= index < (1 << 48):
        raise ValueError(f"stream index out of range: {index}")
    return (purpose << 48) | index


def raw(seed: int, stream: int, count: int) -> np.ndarray:
    """``count`` raw 64-bit words from stream ``(seed, stream)``."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Philox(key=key).random_raw(count).astype(np.uint64, copy=False)


def uniforms(seed: int, stream: int, count: int) -> np.ndarray:
    """Doubles in [0, 1) from the top 53 bits of each word."""
    return (raw(seed, stream, count) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53


def normals(seed: int, stream: int, count: int) -> np.ndarray:
    """Standard normals by Box-Muller, two per pair of words."""
    pairs = (count + 1) // 2
    u = (raw(seed, stream, 2 * pairs) >> np.uint64(11)).astype(np.float64)
    u1 = (u[0::2] + 1.0) * _TWO_POW_M53  # (0, 1]
    u2 = u[1::2] * _TWO_POW_M53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count]


def bits(seed: int, stream: int, count: int) -> np.ndarray:
    """``count`` bits, most significant bit of each word first."""
    words = raw(seed, stream, (count + 63) // 64)
    as_bytes = words.astype(">u8").view(np.uint8)
    return np.unpackbits(as_bytes)[:count]


def chunk_sizes(count: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(count, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(fn: Callable[[int, int], T], count: int, workers: int = 1, chunk: int = CHUNK) -> list[T]:
    """Run ``fn(chunk_index, chunk_size)`` over all chunks; results in chunk order."""
    sizes = chunk_sizes(count, chunk)
    if workers <= 1 or len(sizes) <= 1:
        return [fn(i, size) for i, size in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))
