"""
Fixed-capacity feature caches for coopsync.

Each agent keeps the m most recent feature maps it has produced (ego) or
received (collaborators). The cache:
- Admits strictly newer maps and evicts the oldest at capacity
- Never mutates stored maps; readers get an immutable snapshot
- Supports retrieval of any cached timestamp

Thread-Safety:
    One writer per cache (the arrival handler) and any number of readers.
    Insertions and snapshots are serialized by a per-cache lock.
"""

from __future__ import annotations

import threading
from collections import deque
from typing import Iterator, Optional

from . import logger
from .exceptions import CacheOrderError, ConfigError
from .featuremap import FeatureMap


class AgentCache:
    """
    Time-ordered buffer of one agent's feature maps, newest last.

    Usage:
        cache = AgentCache("infra", capacity=4)
        cache.insert(feature_map)
        history = cache.entries
    """

    def __init__(self, agent_id: str, capacity: int) -> None:
        if capacity <= 0:
            raise ConfigError("Cache capacity must be positive", str(capacity), field="cache_capacity")
        self.agent_id = agent_id
        self.capacity = capacity
        self._entries: deque[FeatureMap] = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def insert(self, f: FeatureMap) -> Optional[FeatureMap]:
        """
        Admit a feature map.

        Args:
            f: Map with a timestamp later than every cached entry

        Returns:
            The evicted map, if the cache was full

        Raises:
            CacheOrderError: If ``f`` is not strictly newer than the newest entry
        """
        with self._lock:
            if self._entries and f.timestamp_us <= self._entries[-1].timestamp_us:
                raise CacheOrderError(
                    details=(
                        f"t={f.timestamp_us}us after t={self._entries[-1].timestamp_us}us "
                        f"in cache '{self.agent_id}'"
                    ),
                    agent_id=self.agent_id,
                )
            evicted = self._entries[0] if len(self._entries) == self.capacity else None
            self._entries.append(f)
        if evicted is not None:
            logger.debug(f"Cache '{self.agent_id}' evicted t={evicted.timestamp_us}us")
        return evicted

    @property
    def entries(self) -> tuple[FeatureMap, ...]:
        """Snapshot of the cached maps, oldest first."""
        with self._lock:
            return tuple(self._entries)

    @property
    def timestamps(self) -> list[int]:
        return [f.timestamp_us for f in self.entries]

    @property
    def newest(self) -> Optional[FeatureMap]:
        snapshot = self.entries
        return snapshot[-1] if snapshot else None

    @property
    def full(self) -> bool:
        return len(self) == self.capacity

    def get(self, timestamp_us: int) -> Optional[FeatureMap]:
        """Cached map captured at ``timestamp_us``, if still held."""
        for f in self.entries:
            if f.timestamp_us == timestamp_us:
                return f
        return None

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
        logger.debug(f"Cache '{self.agent_id}' cleared")

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __iter__(self) -> Iterator[FeatureMap]:
        return iter(self.entries)

    def __repr__(self) -> str:
        return f"AgentCache('{self.agent_id}', {len(self)}/{self.capacity}, t={self.timestamps})"


class CacheSet:
    """All agent caches of one pipeline run, keyed by agent id."""

    def __init__(self, capacities: dict[str, int]) -> None:
        self._caches = {agent_id: AgentCache(agent_id, m) for agent_id, m in capacities.items()}

    def __getitem__(self, agent_id: str) -> AgentCache:
        return self._caches[agent_id]

    def __iter__(self) -> Iterator[AgentCache]:
        return iter(self._caches.values())

    def __len__(self) -> int:
        return len(self._caches)

    def agent_ids(self) -> list[str]:
        return list(self._caches)

    def clear_all(self) -> None:
        for cache in self._caches.values():
            cache.clear()
