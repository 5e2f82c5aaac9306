"""Trajectory-parallel execution over contiguous index blocks.

Every producer used here keys its randomness by trajectory index.  The block
partition depends only on the batch size and memory cap, never on the thread
count, so BLAS rounding (which can vary with matrix shape) is the same in
serial and threaded runs and the outputs are bit-identical.  ``threads=0``
runs the blocks in the calling thread.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ensemble import Ensemble
from .errors import ParameterError

__all__ = ["split_indices", "block_indices", "run_blocks"]

# partition targets: about this many blocks, none smaller than MIN_BLOCK
TARGET_BLOCKS = 16
MIN_BLOCK = 32


def split_indices(batch: int, parts: int) -> list[np.ndarray]:
    if batch < 1:
        raise ParameterError("batch must be >= 1")
    parts = max(1, min(parts, batch))
    return [b for b in np.array_split(np.arange(batch), parts) if b.size]


def block_indices(batch: int, max_block: int | None = None) -> list[np.ndarray]:
    """Thread-independent partition of ``range(batch)`` into contiguous blocks."""
    if batch < 1:
        raise ParameterError("batch must be >= 1")
    if max_block is not None and max_block < 1:
        raise ParameterError(f"max_block must be >= 1, got {max_block}")
    size = max(MIN_BLOCK, -(-batch // TARGET_BLOCKS))
    if max_block is not None:
        size = min(size, max_block)
    return [np.arange(lo, min(lo + size, batch)) for lo in range(0, batch, size)]


def run_blocks(produce, batch: int, threads: int = 0, max_block: int | None = None) -> Ensemble:
    """Call ``produce(indices) -> Ensemble`` per block and stack along the batch axis.

    ``max_block`` caps the trajectories per call to bound peak memory.
    """
    if threads < 0:
        raise ParameterError(f"threads must be >= 0, got {threads}")
    blocks = block_indices(batch, max_block)
    if len(blocks) == 1:
        return produce(blocks[0])
    if threads == 0:
        parts = [produce(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(produce, blocks))
    return Ensemble(np.concatenate([p.data for p in parts], axis=0), parts[0].dt)
