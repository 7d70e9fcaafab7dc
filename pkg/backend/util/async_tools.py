"""
Async sweep tools - bounded concurrent execution of blocking sweep points,
timeouts, and the seeded generators behind every random start.
"""

import asyncio
import logging
from typing import Awaitable, Callable, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar('T')


class AsyncTimeoutError(Exception):
    """Raised when a sweep point exceeds its time budget."""
    pass


async def timeout(awaitable: Awaitable[T], seconds: Optional[float]) -> T:
    """
    Add a timeout to an awaitable; None or a nonpositive value waits forever.

    Raises:
        AsyncTimeoutError: If the operation times out
    """
    if not seconds or seconds <= 0:
        return await awaitable
    try:
        return await asyncio.wait_for(awaitable, timeout=seconds)
    except asyncio.TimeoutError:
        raise AsyncTimeoutError(f"Operation timed out after {seconds}s")


async def run_in_order(
    jobs: Sequence[Callable[[], T]],
    max_concurrency: int = 1,
    seconds: Optional[float] = None,
) -> List[T | BaseException]:
    """
    Run blocking jobs in worker threads, at most max_concurrency at a time.

    Results come back in submission order regardless of completion order;
    a job that raises contributes its exception instead of a result.

    A job past its timeout is reported as AsyncTimeoutError, but Python threads
    cannot be interrupted: its thread runs to completion and keeps its
    concurrency slot until then, so at most max_concurrency jobs ever run.
    """
    if max_concurrency < 1:
        raise ValueError("max_concurrency must be at least 1")
    semaphore = asyncio.Semaphore(max_concurrency)

    async def _one(index: int, job: Callable[[], T]) -> T:
        async with semaphore:
            logger.debug(f"[async_tools] job {index} started")
            work = asyncio.ensure_future(asyncio.to_thread(job))
            try:
                return await timeout(asyncio.shield(work), seconds)
            except AsyncTimeoutError:
                logger.warning(f"[async_tools] job {index} timed out after {seconds}s; waiting for its thread")
                await asyncio.gather(work, return_exceptions=True)
                raise

    return await asyncio.gather(*(_one(i, job) for i, job in enumerate(jobs)), return_exceptions=True)


def run_sweep(
    jobs: Sequence[Callable[[], T]],
    max_concurrency: int = 1,
    seconds: Optional[float] = None,
) -> List[T | BaseException]:
    """Synchronous entry point for run_in_order."""
    return asyncio.run(run_in_order(jobs, max_concurrency, seconds))


def seeded_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator keyed by (seed, stream); independent of execution order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))
