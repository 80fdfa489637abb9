"""
Process-pool fan-out for realisation sweeps.

Tasks are small immutable descriptors; results come back in task order so
aggregation never depends on which worker finished first.
"""
import logging
from multiprocessing import Pool
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_tasks(func: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply a picklable top-level function to every task.

    Args:
        func: Worker function; must be importable by child processes
        tasks: Task descriptors
        workers: Process count; 1 runs inline in this process

    Returns:
        Results in the same order as tasks
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    processes = min(workers, len(tasks))
    logger.info(f"Dispatching {len(tasks)} tasks to {processes} worker processes")
    with Pool(processes=processes) as pool:
        return list(pool.imap(func, tasks, chunksize=1))
