"""
Process management for parallel Monte-Carlo trials.

This module handles:
- Worker pool sizing from the physical core count
- Ordered parallel evaluation of trial tasks
- In-process fallback for single-worker runs
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import psutil

from config.config_manager import ProcessingConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def default_worker_count() -> int:
    """Physical core count, falling back to logical cores."""
    return psutil.cpu_count(logical=False) or os.cpu_count() or 1


class ProcessManager:
    """
    Manages the process pool used for trial-level parallelism.

    Results always come back in submission order, so aggregation downstream
    is independent of scheduling.
    """

    def __init__(self, config: ProcessingConfig) -> None:
        """
        Initialize the process manager.

        Args:
            config: Processing configuration
        """
        self.config = config
        self.num_workers = config.num_workers or default_worker_count()
        self._pool: Optional[ProcessPoolExecutor] = None
        logger.info(f"Process manager initialized with {self.num_workers} worker(s)")

    @property
    def parallel(self) -> bool:
        return self.num_workers > 1

    def start(self) -> None:
        """Start the worker pool (no-op for in-process runs)."""
        if self.parallel and self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.num_workers)
            logger.debug("Worker pool started")

    def stop(self) -> None:
        """Shut the worker pool down."""
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
            logger.debug("Worker pool stopped")

    def __enter__(self) -> "ProcessManager":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def map(self, fn: Callable[[T], R], tasks: Iterable[T]) -> List[R]:
        """
        Apply fn to every task, preserving task order.

        fn must be a module-level function when the pool is parallel.
        """
        tasks = list(tasks)
        if not self.parallel or len(tasks) <= 1:
            return [fn(task) for task in tasks]
        if self._pool is None:
            self.start()
        return list(self._pool.map(fn, tasks, chunksize=self.config.chunk_size))
