"""Seeded, chunked Monte Carlo plumbing.

Every Monte Carlo loop in the package splits its draws into fixed-size chunks.
Chunk ``j`` draws from its own generator keyed by ``(seed, j)``, and chunk
results are reduced in chunk order. Output therefore depends only on the seed
and the draw count, never on how many worker threads ran the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_CHUNK = 1 << 16


def _entropy(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def chunk_rng(seed, chunk: int) -> np.random.Generator:
    """Generator for chunk ``chunk`` of the stream identified by ``seed``.

    ``seed`` is an int or a tuple of ints; tuples name independent sub-streams
    (e.g. ``(seed, 1)`` for a second estimator drawn independently).
    """
    ss = np.random.SeedSequence(entropy=_entropy(seed), spawn_key=(int(chunk),))
    return np.random.default_rng(ss)


def chunk_sizes(n: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    if n < 0:
        raise ValueError("n must be non-negative")
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    func: Callable[[np.random.Generator, int, int], T],
    n: int,
    seed,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> list[T]:
    """Run ``func(rng, size, start)`` over the chunks of ``n`` draws, in order."""
    sizes = chunk_sizes(n, chunk)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if sizes else []
    jobs: Sequence[tuple[int, int, int]] = [(j, s, int(st)) for j, (s, st) in enumerate(zip(sizes, starts))]

    def run(job):
        j, size, start = job
        return func(chunk_rng(seed, j), size, start)

    if workers <= 1 or len(jobs) <= 1:
        return [run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def mean_and_se(x) -> tuple[float, float]:
    """Sample mean and its standard error (``ddof=1``)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))
