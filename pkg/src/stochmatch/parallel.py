"""Deterministic seed splitting and block-parallel trial execution.

Every randomized operation in this package draws from a generator derived
from ``(master_seed, *path)`` via :class:`numpy.random.SeedSequence`, and
long Monte Carlo loops are chopped into fixed-size blocks whose streams
depend only on the block index.  Aggregation happens in block order, so the
result of a run is byte-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

# Fixed block length for Monte Carlo loops.  Must never depend on the worker
# count, or the per-block streams would change with it.
BLOCK_LEN = 2048

_WORKERS_ENV = "STOCHMATCH_WORKERS"


def rng_from(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream identified by ``(master_seed, *path)``."""
    entropy = (int(master_seed),) + tuple(int(x) for x in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument, else the STOCHMATCH_WORKERS env var, else 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(_WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def iter_blocks(total: int, block_len: int = BLOCK_LEN):
    """Yield (block_index, start, count) covering ``total`` trials."""
    start = 0
    index = 0
    while start < total:
        count = min(block_len, total - start)
        yield index, start, count
        index += 1
        start += count


def run_blocks(
    fn: Callable[..., Any],
    args: tuple,
    total: int,
    workers: int | None = None,
    block_len: int = BLOCK_LEN,
) -> list:
    """Run ``fn(*args, block_index, count)`` over all blocks of ``total`` trials.

    Results are returned in block order.  ``fn`` must be picklable (a
    module-level function) when more than one worker is used.
    """
    workers = resolve_workers(workers)
    blocks = list(iter_blocks(total, block_len))
    if workers == 1 or len(blocks) == 1:
        return [fn(*args, index, count) for index, _start, count in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, index, count) for index, _start, count in blocks]
        return [f.result() for f in futures]


def sum_counts(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Reduce per-block count vectors in block order."""
    out = np.zeros_like(parts[0])
    for part in parts:
        out = out + part
    return out
