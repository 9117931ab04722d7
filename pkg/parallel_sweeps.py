# parallel_sweeps.py
# -------------------
# Worker-count setting and the two primitives every sweep is built from:
# - ordered_map: map a function over items with a thread pool, results in input order
# - pairwise_sum: fixed binary-tree reduction, independent of how the items were produced
#
# Outputs of a sweep never depend on the number of workers: work is split by
# index, and reductions always run over the full ordered list of partial results.
import logging
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

_threads = 1


def set_threads(count: int) -> None:
    """Cap the number of worker threads used by sweeps (>= 1)."""
    global _threads
    count = int(count)
    if count < 1:
        raise ValueError(f"thread count must be >= 1, got {count}.")
    _threads = count
    logger.debug("worker threads set to %d", count)


def get_threads() -> int:
    return _threads


def ordered_map(fn, items, threads: int | None = None) -> list:
    """Apply fn to every item; the result list follows the order of `items`."""
    items = list(items)
    workers = _threads if threads is None else int(threads)
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def pairwise_sum(values, zero=0.0):
    """
    Sum values by repeatedly adding neighbours (0+1, 2+3, ...) until one is left.

    Works for Python scalars, numpy scalars and equally shaped numpy arrays.
    An empty input returns `zero`.
    """
    level = list(values)
    if not level:
        return zero
    while len(level) > 1:
        nxt = [level[i] + level[i + 1] for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def index_chunks(count: int, size: int) -> list[range]:
    """Split range(count) into consecutive ranges of at most `size` indices."""
    size = max(1, int(size))
    return [range(start, min(start + size, count)) for start in range(0, count, size)]
