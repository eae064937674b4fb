"""Named, replayable random streams.

Every stochastic choice in this package (synthetic data, masking, sampling,
coordinate noise) draws from a counter-based Philox stream addressed by
``(seed, path)``. Streams for different paths are independent, and a record's
stream never depends on how many other records were processed before it, so
parallel and serial execution produce bitwise-identical artifacts.

The construction is a stable, documented contract so tests can replay draws
without going through this module:

* ``key0 = seed & (2**64 - 1)``
* ``key1`` folds the path components with splitmix64::

      h = 0
      for part in path:
          h = splitmix64(h ^ u64(part))

  where ``u64(int)`` masks to 64 bits and ``u64(str)`` is the little-endian
  integer of ``hashlib.blake2b(part.encode("utf-8"), digest_size=8)``.
* the stream is ``numpy.random.Generator(numpy.random.Philox(key=[key0, key1]))``.
"""

from __future__ import annotations

import hashlib

import numpy as np

_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _as_u64(part: int | str) -> int:
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    if isinstance(part, (bool, float)):
        raise TypeError(f"stream path parts must be int or str, got {part!r}")
    return int(part) & _M64


def fold_path(*path: int | str) -> int:
    """Fold path components into a single 64-bit word (see module docstring)."""
    h = 0
    for part in path:
        h = _splitmix64(h ^ _as_u64(part))
    return h


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Philox generator for ``(seed, path)``. Same arguments, same draws."""
    key = np.array([_as_u64(seed), fold_path(*path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(seed: int, *path: int | str) -> int:
    """Derive a scalar sub-seed, for APIs that take a seed rather than a stream."""
    return fold_path(_as_u64(seed), *path)
