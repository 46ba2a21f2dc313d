import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from threading import Lock
from typing import Callable, Generic, List, Optional, Sequence, TypeVar

from rich.progress import Progress

from .logging import get_logger

logger = get_logger(__name__)

T = TypeVar('T')
R = TypeVar('R')


@dataclass
class WorkItem(Generic[T, R]):
    input_data: T
    result: Optional[R] = None
    error: Optional[Exception] = None
    start_time: Optional[float] = None
    end_time: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def processing_time(self) -> float:
        if self.start_time is not None and self.end_time is not None:
            return self.end_time - self.start_time
        return 0


class ParallelProcessor:
    """Runs independent work items on a thread pool.

    Results come back in submission order whatever the completion order, so
    anything assembled from them is deterministic.
    """

    def __init__(self, max_workers: int = 1):
        self.max_workers = max_workers
        self.progress_lock = Lock()

    def process_batch(
        self,
        items: Sequence[T],
        process_func: Callable[[T], R],
        progress: Optional[Progress] = None,
        description: str = "Processing",
    ) -> List[WorkItem[T, R]]:
        """
        Process a batch of items with optional progress tracking.
        """
        work_items = [WorkItem(item) for item in items]
        task = None
        if progress is not None:
            with self.progress_lock:
                task = progress.add_task(description, total=len(work_items))

        def process_item(work_item: WorkItem[T, R]) -> WorkItem[T, R]:
            """Process a single work item with timing."""
            work_item.start_time = time.perf_counter()
            try:
                work_item.result = process_func(work_item.input_data)
            except Exception as e:
                work_item.error = e
                logger.debug(f"Work item failed: {e}")
            work_item.end_time = time.perf_counter()
            return work_item

        if self.max_workers <= 1:
            for work_item in work_items:
                process_item(work_item)
                self._advance(progress, task)
            return work_items

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = [executor.submit(process_item, item) for item in work_items]
            for _ in as_completed(futures):
                self._advance(progress, task)

        return work_items

    def _advance(self, progress: Optional[Progress], task) -> None:
        if progress is not None and task is not None:
            with self.progress_lock:
                progress.advance(task)
