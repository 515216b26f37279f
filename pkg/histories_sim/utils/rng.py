"""
Seeded random streams and order-independent chunked execution.

Stream derivation: trajectory (or sample block) ``index`` under
``master_seed`` draws from ``Generator(Philox(SeedSequence(master_seed,
spawn_key=(index,))))``. Every consumer draws its noise for a work unit
from that stream in time order, so a draw is a pure function of
(master_seed, index, step) and never depends on thread scheduling.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

SEED_MASK = (1 << 64) - 1


def normalize_seed(seed: int) -> int:
    """Reduce any integer seed to the unsigned 64-bit range."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return int(seed) & SEED_MASK


def trajectory_generator(master_seed: int, index: int) -> np.random.Generator:
    """
    Independent generator for work unit ``index`` under ``master_seed``.

    Example:
        >>> g1 = trajectory_generator(7, 0)
        >>> g2 = trajectory_generator(7, 0)
        >>> float(g1.normal()) == float(g2.normal())
        True
    """
    sequence = np.random.SeedSequence(normalize_seed(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(sequence))


def complex_increments(
    generator: np.random.Generator, shape: Sequence[int], dt: float
) -> np.ndarray:
    """
    Complex Wiener increments with independent real and imaginary parts
    of variance dt/2 each, so that M[dξ dξ*] = dt and M[dξ dξ] = 0.
    """
    scale = np.sqrt(dt / 2.0)
    draws = generator.standard_normal((2, *shape))
    return scale * (draws[0] + 1j * draws[1])


def chunk_bounds(n_items: int, chunk: int) -> List[tuple]:
    """Fixed [start, stop) chunk boundaries; independent of thread count."""
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    return [(start, min(start + chunk, n_items)) for start in range(0, n_items, chunk)]


def chunked_map(
    fn: Callable[[int, int], T],
    n_items: int,
    chunk: int,
    threads: Optional[int] = 1,
) -> List[T]:
    """
    Evaluate ``fn(start, stop)`` over fixed chunks and return results in
    chunk order.

    Callers reduce the returned list sequentially, which keeps floating
    point sums bitwise identical for any ``threads`` value.
    """
    bounds = chunk_bounds(n_items, chunk)
    workers = max(1, int(threads or 1))
    if workers == 1 or len(bounds) == 1:
        return [fn(start, stop) for start, stop in bounds]

    logger.debug(f"Dispatching {len(bounds)} chunks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, start, stop) for start, stop in bounds]
        return [future.result() for future in futures]


def ordered_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Sum partial results strictly left to right."""
    if not parts:
        raise ValueError("ordered_sum needs at least one part")
    total = np.array(parts[0], copy=True)
    for part in parts[1:]:
        total = total + part
    return total
