"""Counter-based random numbers keyed by (seed, stream id, counter).

Every draw is a pure function of its key and an integer counter, so any
cell of any replicate can be regenerated in isolation and the result does
not depend on batch size, traversal order or the number of workers.

The mixing function is the SplitMix64 finalizer. A draw is
``mix(key ^ mix(counter * GOLDEN))``: for a fixed key the map from counter
to output is a bijection, and distinct keys give unrelated sequences.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x5851F42D4C957F2D)
_TWO52 = 2.0 ** -52


def _u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.asarray(int(x) & _MASK, dtype=np.uint64)
    arr = np.asarray(x)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype.kind == "i":
        return arr.astype(np.int64).view(np.uint64)
    if arr.dtype.kind == "u":
        return arr.astype(np.uint64)
    raise TypeError(f"integer input required, got {arr.dtype}")


def mix64(z) -> np.ndarray:
    """SplitMix64 finalizer, elementwise on uint64 arrays (wrapping)."""
    z = _u64(z)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def hash_bits(keys, counters) -> np.ndarray:
    """64 random bits for every broadcast pair of (key, counter)."""
    keys = _u64(keys)
    counters = _u64(counters)
    with np.errstate(over="ignore"):
        return mix64(keys ^ mix64(counters * _GOLDEN))


def fold_key(key, index) -> np.ndarray:
    """Derive a child key from a parent key and an integer index."""
    with np.errstate(over="ignore"):
        return mix64(_u64(key) ^ mix64(_u64(index) * _GOLDEN + _SEED_SALT))


def cell_counter(i, j) -> np.ndarray:
    """Encode lattice coordinates (i, j) as a single 64-bit counter."""
    i = np.asarray(i, dtype=np.int64) + (1 << 31)
    j = np.asarray(j, dtype=np.int64) + (1 << 31)
    return (i.astype(np.uint64) << np.uint64(32)) | j.astype(np.uint64)


def lattice_counters(i0: int, j0: int, rows: int, cols: int) -> np.ndarray:
    """Counters for the lattice block [i0, i0+rows) x [j0, j0+cols)."""
    ii = np.arange(i0, i0 + rows, dtype=np.int64)[:, None]
    jj = np.arange(j0, j0 + cols, dtype=np.int64)[None, :]
    return cell_counter(ii, jj)


def bits_to_uniform(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit words to floats strictly inside (0, 1)."""
    # 52 bits keep (k + 0.5) * 2^-52 exactly representable, so 1.0 never occurs
    return ((bits >> np.uint64(12)).astype(np.float64) + 0.5) * _TWO52


def bits_to_normal(bits: np.ndarray) -> np.ndarray:
    return ndtri(bits_to_uniform(bits))


def bits_to_sign(bits: np.ndarray) -> np.ndarray:
    return 1.0 - 2.0 * (bits >> np.uint64(63)).astype(np.float64)


def _name_to_int(name) -> int:
    if isinstance(name, str):
        # stable across runs, unlike hash()
        return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return int(name)


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible source of random draws.

    ``child`` derives independent sub-streams by folding indices into the
    stream id, so ``s.child(a, b) == s.child(a).child(b)``.
    """

    seed: int
    stream_id: int = 0

    @property
    def key(self) -> np.uint64:
        base = mix64(_u64(self.seed) ^ _SEED_SALT)
        return np.uint64(fold_key(base, self.stream_id))

    def child(self, *ids) -> "RngStream":
        sid = _u64(self.stream_id)
        for ident in ids:
            sid = fold_key(sid, _name_to_int(ident))
        return RngStream(self.seed, int(sid))

    def child_keys(self, ids) -> np.ndarray:
        """Vectorised ``child(i).key`` for an integer array ``ids``."""
        sids = fold_key(_u64(self.stream_id), np.asarray(ids, dtype=np.int64))
        return fold_key(mix64(_u64(self.seed) ^ _SEED_SALT), sids)

    def bits(self, counters) -> np.ndarray:
        return hash_bits(self.key, counters)

    def uniform(self, counters) -> np.ndarray:
        return bits_to_uniform(self.bits(counters))

    def normal(self, counters) -> np.ndarray:
        return bits_to_normal(self.bits(counters))

    def provenance(self) -> dict:
        return {"seed": int(self.seed), "stream_id": int(self.stream_id)}
