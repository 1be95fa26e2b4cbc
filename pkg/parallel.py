# parallel.py - seeded chunked execution shared by the Monte Carlo routines
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from config import MC_CHUNK, resolve_threads

logger = logging.getLogger(__name__)


def chunk_sizes(m, chunk=MC_CHUNK):
    """Split m draws into fixed-size chunks (the last one may be shorter)."""
    m = int(m)
    if m < 1:
        return []
    full, rest = divmod(m, chunk)
    return [chunk] * full + ([rest] if rest else [])


def spawn_rngs(seed, count):
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(c) for c in children]


def map_chunks(fn, m, seed, threads=None, chunk=MC_CHUNK):
    """Run fn(rng, size) over the chunks of m draws, results in chunk order.

    The chunking depends on m and chunk only, so the output does not
    depend on the number of worker threads.
    """
    sizes = chunk_sizes(m, chunk)
    rngs = spawn_rngs(seed, len(sizes))
    workers = min(resolve_threads(threads), max(len(sizes), 1))
    logger.debug("Running %d chunks on %d threads", len(sizes), workers)
    if workers <= 1:
        return [fn(rng, size) for rng, size in zip(rngs, sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rngs, sizes))


def map_ordered(fn, items, threads=None):
    """pool.map over independent work items keeping input order."""
    items = list(items)
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
