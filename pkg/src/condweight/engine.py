"""Chunked replication of a design.

Replicates are grouped in chunks of fixed width. Chunk ``i`` draws from
stream ``stream.child(i)`` only, so its content does not depend on which
worker ran it or in what order. Results are always combined in chunk index
order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator

import numpy as np

from condweight import kernels
from condweight.designs import ATTEMPT_CAP, Layout, RejectionCapExceeded

CHUNK_SIZE = 1 << 14
# Poisson attempts generated per block inside a chunk
ATTEMPT_BLOCK = 1024


def chunk_draws(lay: Layout, gen: np.random.Generator, size: int, p_accept=None):
    """``size`` design draws as ``(idx, sizes)``; idx rows are unit positions padded with -1."""
    if lay.mode == "fixed":
        u = gen.random((size, lay.width))
        idx = kernels.decode_fixed(u, lay.order, lay.offsets, lay.alloc)
        return idx, np.full(size, lay.width, dtype=np.int64)
    parts, sz = [], []
    got = 0
    attempts = 0
    while got < size:
        u = gen.random((ATTEMPT_BLOCK, lay.width))
        idx, sizes, used = kernels.decode_poisson(
            u, lay.p, lay.labels, lay.required, lay.n_max, size - got
        )
        attempts += used
        if idx.shape[0]:
            parts.append(idx)
            sz.append(sizes)
            got += idx.shape[0]
        elif attempts >= ATTEMPT_CAP:
            raise RejectionCapExceeded(attempts, p_accept() if p_accept else float("nan"))
    if not parts:
        return np.zeros((0, lay.n_max), np.int64), np.zeros(0, np.int64)
    return np.concatenate(parts), np.concatenate(sz)


def chunk_sizes(total: int, chunk_size: int) -> list:
    full, rest = divmod(int(total), int(chunk_size))
    return [chunk_size] * full + ([rest] if rest else [])


def imap_chunks(fn: Callable[[int], object], chunk_ids: Iterable[int], workers: int = 1) -> Iterator:
    """Yield ``fn(i)`` in chunk order, evaluating up to ``workers`` ahead."""
    ids = list(chunk_ids)
    if workers <= 1:
        for i in ids:
            yield fn(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(ids), workers):
            yield from pool.map(fn, ids[start : start + workers])


def waves(fn: Callable[[int], object], workers: int = 1, start: int = 0) -> Iterator:
    """Unbounded :func:`imap_chunks`; the caller stops iterating when done."""
    i = start
    if workers <= 1:
        while True:
            yield fn(i)
            i += 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while True:
            yield from pool.map(fn, range(i, i + workers))
            i += workers
