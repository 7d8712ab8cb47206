# app/services/pool.py
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(workers: Optional[int]) -> int:
    """None means one worker per logical core."""
    if workers is None:
        return os.cpu_count() or 1
    return max(1, int(workers))


def map_ordered(func: Callable[[T], R], items: Iterable[T], workers: Optional[int] = 1) -> List[R]:
    """Apply `func` to every item; results come back in submission order.

    The first exception raised by a task propagates after the pool shuts down."""
    items = list(items)
    workers = min(resolve_workers(workers), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} tasks to {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(func, item) for item in items]
        return [future.result() for future in futures]
