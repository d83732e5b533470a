"""Bounded worker-thread fan-out on top of anyio."""

import logging
from collections.abc import Callable, Sequence
from typing import TypeVar

import anyio
import anyio.to_thread

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


async def map_bounded_async(
    fn: Callable[[T], R], items: Sequence[T], limit: int
) -> list[R]:
    """Run ``fn`` over ``items`` on worker threads, at most ``limit`` at once.

    Results keep the order of ``items``. If any call fails, the failure of
    the lowest item index is re-raised as-is once all workers finished.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    sem = anyio.Semaphore(limit)
    results: list[R | None] = [None] * len(items)
    failures: dict[int, BaseException] = {}

    async def worker(i: int, item: T) -> None:
        async with sem:
            try:
                results[i] = await anyio.to_thread.run_sync(fn, item)
            except Exception as e:  # collected and re-raised below
                failures[i] = e

    async with anyio.create_task_group() as tg:
        for i, item in enumerate(items):
            tg.start_soon(worker, i, item)

    if failures:
        first = min(failures)
        logger.debug(f"{len(failures)} of {len(items)} tasks failed")
        raise failures[first]
    return [r for r in results]  # type: ignore[misc]


def map_bounded(fn: Callable[[T], R], items: Sequence[T], limit: int) -> list[R]:
    """Blocking wrapper around :func:`map_bounded_async`."""
    if limit == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return anyio.run(map_bounded_async, fn, items, limit)
