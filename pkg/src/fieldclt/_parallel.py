"""Order-preserving chunked execution.

Work is split into chunks of a fixed size that does not depend on the
worker count, and results are reassembled in chunk order, so the numbers
produced are identical for any number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 16


def chunk_bounds(n: int, chunk: int = DEFAULT_CHUNK):
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def map_chunks(fn, n: int, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> list:
    """Call ``fn(start, stop)`` on consecutive chunks; return results in order."""
    bounds = chunk_bounds(n, chunk)
    if workers <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


def concat_chunks(fn, n: int, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    return np.concatenate(map_chunks(fn, n, workers, chunk), axis=0)
