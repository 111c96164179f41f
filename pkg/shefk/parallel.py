"""
shefk.parallel - Batched worker pool with deterministic reduction order
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .config import DEFAULT_BATCH_SIZE, default_threads

logger = logging.getLogger(__name__)

T = TypeVar('T')


def batch_ranges(n_items: int, batch_size: int = DEFAULT_BATCH_SIZE) -> List[Tuple[int, int]]:
    """
    Split [0, n_items) into fixed half-open ranges

    Batch boundaries depend only on n_items and batch_size, never on the
    worker count.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    return [(start, min(start + batch_size, n_items)) for start in range(0, n_items, batch_size)]


class WorkerPool:
    """Runs batch functions on a thread pool and returns results in index order"""

    def __init__(self, threads: Optional[int] = None):
        self.threads = max(1, threads if threads is not None else default_threads())
        self.lock = threading.Lock()
        self.completed = 0

    def _run(self, func: Callable[[int, int], T], bounds: Tuple[int, int]) -> T:
        result = func(*bounds)
        with self.lock:
            self.completed += 1
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(f"Batch {bounds[0]}:{bounds[1]} done")
        return result

    def map_batches(self, func: Callable[[int, int], T], n_items: int,
                    batch_size: int = DEFAULT_BATCH_SIZE) -> List[T]:
        """
        Apply func(start, stop) to every batch of [0, n_items)

        Args:
            func: Batch worker; must be pure given its index range
            n_items: Total number of items
            batch_size: Items per batch

        Returns:
            List of batch results ordered by batch start
        """
        ranges = batch_ranges(n_items, batch_size)
        self.completed = 0
        if self.threads == 1 or len(ranges) <= 1:
            return [self._run(func, r) for r in ranges]
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            # executor.map preserves input order
            return list(executor.map(lambda r: self._run(func, r), ranges))


def map_batches(func: Callable[[int, int], T], n_items: int,
                batch_size: int = DEFAULT_BATCH_SIZE, threads: Optional[int] = None) -> List[T]:
    """Convenience wrapper around WorkerPool.map_batches"""
    return WorkerPool(threads).map_batches(func, n_items, batch_size)


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate ordered numpy batch results along the first axis"""
    return np.concatenate(list(parts), axis=0)
