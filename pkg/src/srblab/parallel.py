"""Deterministic fan-out over independent tasks.

Work is always cut into the same tasks regardless of the worker count and the
results are returned in task order, so reductions performed by the caller are
bit-identical for any number of workers.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

ENV_WORKERS = "SRBLAB_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(ENV_WORKERS, "1")))
    except ValueError:
        return 1


def run_tasks(fn, tasks, workers: int | None = None) -> list:
    """``[fn(t) for t in tasks]``, optionally on a process pool."""
    tasks = list(tasks)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


def chunk_slices(n: int, size: int) -> list[slice]:
    return [slice(s, min(n, s + size)) for s in range(0, n, size)]


def _key(name) -> int:
    return int.from_bytes(str(name).encode(), "little") % (1 << 63) if isinstance(name, str) else int(name)


def rng_for(seed: int, *path) -> np.random.Generator:
    """Counter-based (Philox) generator for the named substream ``path`` of ``seed``.

    The stream depends only on ``seed`` and ``path``, never on scheduling.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def substreams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators for ``count`` tasks, derived from one seed."""
    return [rng_for(seed, i) for i in range(count)]
