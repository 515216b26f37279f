"""
LRU cache of Hermitian eigendecompositions.
Thread-safe store so repeated exp(-iHt/hbar) evaluations for one
Hamiltonian share a single eigh call.
"""
import hashlib
from threading import Lock
from typing import Any, Dict, Optional, Tuple

import numpy as np
from cachetools import LRUCache

from histories_sim.utils.logger import LoggerMixin

Decomposition = Tuple[np.ndarray, np.ndarray]


def fingerprint(matrix: np.ndarray) -> str:
    """Content hash of a dense matrix (shape, dtype and raw bytes)."""
    array = np.ascontiguousarray(matrix)
    digest = hashlib.blake2b(digest_size=16)
    digest.update(str(array.shape).encode())
    digest.update(str(array.dtype).encode())
    digest.update(array.tobytes())
    return digest.hexdigest()


class PropagatorCache(LoggerMixin):
    """
    Thread-safe LRU cache of (eigenvalues, eigenvectors) keyed by the
    Hamiltonian's content hash.

    Features:
    - LRU eviction when max_size reached
    - Thread-safe operations
    - Statistics tracking (hits, misses, evictions)

    Example:
        >>> cache = PropagatorCache(max_size=8)
        >>> w, v = cache.eigh(np.diag([0.0, 1.0]))
        >>> cache.get_stats()["misses"]
        1
    """

    def __init__(self, max_size: int = 64):
        """
        Initialize the cache.

        Args:
            max_size: Maximum number of decompositions kept before LRU eviction
        """
        self.max_size = max_size
        self.cache: LRUCache = LRUCache(maxsize=max_size)
        self.lock = Lock()

        self.hits = 0
        self.misses = 0
        self.evictions = 0

        self.logger.debug(f"PropagatorCache initialized: max_size={max_size}")

    def get(self, key: str) -> Optional[Decomposition]:
        """Return the cached decomposition for ``key`` or None."""
        with self.lock:
            value = self.cache.get(key)
            if value is None:
                self.misses += 1
                return None
            self.hits += 1
            return value

    def set(self, key: str, value: Decomposition) -> None:
        """Store a decomposition, evicting the least recently used entry when full."""
        with self.lock:
            if key not in self.cache and len(self.cache) >= self.max_size:
                self.evictions += 1
            self.cache[key] = value

    def eigh(self, hamiltonian: np.ndarray) -> Decomposition:
        """
        Eigendecomposition of a Hermitian matrix, computed once per content.

        Returned arrays are read-only; callers must not modify them.
        """
        key = fingerprint(hamiltonian)
        cached = self.get(key)
        if cached is not None:
            return cached

        eigenvalues, eigenvectors = np.linalg.eigh(hamiltonian)
        eigenvalues.setflags(write=False)
        eigenvectors.setflags(write=False)
        self.set(key, (eigenvalues, eigenvectors))
        self.logger.debug(f"Cached eigendecomposition dim={hamiltonian.shape[0]} key={key[:8]}")
        return eigenvalues, eigenvectors

    def clear(self) -> None:
        """Clear all cache entries."""
        with self.lock:
            count = len(self.cache)
            self.cache.clear()
            self.logger.info(f"Propagator cache cleared: {count} entries removed")

    def get_stats(self) -> Dict[str, Any]:
        """
        Get cache statistics.

        Returns:
            Dict with size, max_size, hits, misses, hit_rate (percent) and evictions
        """
        with self.lock:
            total_requests = self.hits + self.misses
            hit_rate = (self.hits / total_requests * 100) if total_requests > 0 else 0.0
            return {
                "size": len(self.cache),
                "max_size": self.max_size,
                "hits": self.hits,
                "misses": self.misses,
                "hit_rate": hit_rate,
                "evictions": self.evictions,
            }

    def reset_stats(self) -> None:
        """Reset statistics counters."""
        with self.lock:
            self.hits = 0
            self.misses = 0
            self.evictions = 0


_default_cache: Optional[PropagatorCache] = None
_default_lock = Lock()


def default_cache() -> PropagatorCache:
    """Process-wide cache sized from configuration."""
    global _default_cache
    with _default_lock:
        if _default_cache is None:
            from histories_sim.config import config

            _default_cache = PropagatorCache(max_size=config.PROPAGATOR_CACHE_SIZE)
        return _default_cache
