from __future__ import annotations
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Order-preserving parallel map handed to the computational modules.

    ``workers <= 1`` runs inline in the calling thread.
    """
    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self._stop = threading.Event()
        self._executor = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="ahres") \
            if self.workers > 1 else None

    def stop(self):
        """Signal pending work to be skipped."""
        self._stop.set()

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    def _guard(self, fn: Callable[[T], R]) -> Callable[[T], R]:
        def run(item):
            if self._stop.is_set():
                raise RuntimeError("worker pool stopped")
            return fn(item)
        return run

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if self._executor is None:
            return [self._guard(fn)(it) for it in items]
        log.debug("dispatching %d items over %d workers", len(items), self.workers)
        return list(self._executor.map(self._guard(fn), items))

    __call__ = map

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc):
        self.close()
        return False
