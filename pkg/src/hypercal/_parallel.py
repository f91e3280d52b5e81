from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def block_slices(n, block):
    """Fixed-size slices over ``range(n)``; independent of the worker count."""
    return [slice(i, min(i + block, n)) for i in range(0, n, block)]


def map_blocks(func, n, block, workers=1):
    """Apply ``func(slice)`` to consecutive blocks, returning results in order.

    Block boundaries depend only on ``n`` and ``block`` so outputs are
    bit-identical for any ``workers``.
    """
    slices = block_slices(n, block)
    if workers is None or workers <= 1 or len(slices) <= 1:
        return [func(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, slices))
