"""Unit tests for the work pool."""
import time

import pytest
from rich.console import Console
from rich.progress import Progress

from paeekit.parallel import ParallelProcessor


def _slow_square(x: int) -> int:
    time.sleep(0.01 * (5 - x))
    if x == 3:
        raise ValueError("three is not allowed")
    return x * x


@pytest.mark.unit
@pytest.mark.parametrize("max_workers", [1, 4])
def test_results_keep_submission_order(max_workers: int):
    """Test results line up with inputs and failures are captured per item."""
    items = ParallelProcessor(max_workers=max_workers).process_batch(list(range(5)), _slow_square)
    assert [item.input_data for item in items] == [0, 1, 2, 3, 4]
    assert [item.result for item in items] == [0, 1, 4, None, 16]
    assert [item.ok for item in items] == [True, True, True, False, True]
    assert isinstance(items[3].error, ValueError)
    assert all(item.processing_time > 0 for item in items)


@pytest.mark.unit
def test_progress_is_advanced():
    """Test one progress step per item."""
    progress = Progress(console=Console(quiet=True))
    with progress:
        ParallelProcessor(max_workers=2).process_batch([1, 2, 4], _slow_square, progress=progress, description="x")
    task = progress.tasks[0]
    assert task.total == 3
    assert task.completed == 3
