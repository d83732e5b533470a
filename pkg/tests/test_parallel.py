"""Tests for bounded thread fan-out."""

import threading
import time

import pytest

from nifkit.parallel import map_bounded, map_bounded_async


class Boom(Exception):
    pass


def _fail_on(bad: set[int]):
    def fn(i: int) -> int:
        if i in bad:
            time.sleep(0.01 * (5 - i))
            raise Boom(i)
        return i * i

    return fn


async def test_order_preserved():
    """Test that results keep the order of the inputs."""

    def slow_square(i: int) -> int:
        time.sleep(0.002 * (5 - i))
        return i * i

    assert await map_bounded_async(slow_square, list(range(5)), 3) == [0, 1, 4, 9, 16]


async def test_lowest_index_failure_wins():
    """Test that the failure of the lowest item index is re-raised."""
    with pytest.raises(Boom) as exc_info:
        await map_bounded_async(_fail_on({1, 3}), list(range(5)), 5)
    assert exc_info.value.args == (1,)


async def test_limit_respected():
    """Test that no more than limit calls run at once."""
    lock = threading.Lock()
    active = 0
    peak = 0

    def track(_: int) -> None:
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.01)
        with lock:
            active -= 1

    await map_bounded_async(track, list(range(8)), 2)
    assert peak <= 2


async def test_invalid_limit():
    """Test that a limit below one is rejected."""
    with pytest.raises(ValueError):
        await map_bounded_async(lambda i: i, [1], 0)


def test_blocking_wrapper():
    """Test the blocking wrapper, sequential and threaded."""
    assert map_bounded(lambda i: i + 1, [1, 2, 3], 1) == [2, 3, 4]
    assert map_bounded(lambda i: i + 1, [1, 2, 3], 3) == [2, 3, 4]
    assert map_bounded(lambda i: i, [], 4) == []
    with pytest.raises(Boom):
        map_bounded(_fail_on({0}), [0, 1], 2)
