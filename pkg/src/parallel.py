"""
Thread-pool helper honouring the TOPO_MATCH_THREADS cap
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from config.settings import config

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """
    Apply func to every item, results in input order

    Args:
        func: Pure function of one item
        items: Work items
        threads: Worker cap; defaults to the configured runtime.threads (serial when unset)

    Returns:
        List of results aligned with items
    """
    items = list(items)
    workers = threads if threads is not None else config.get_threads()
    if not workers or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    workers = min(workers, len(items))
    logger.debug(f"Running {len(items)} tasks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
