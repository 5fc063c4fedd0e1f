"""Two-level storage: per-node LFU block cache over a shared backing store.

The backing store is a set of data nodes, each with an LRU buffer cache in
front of disk.  Block ids are integers indexing a fixed dataset catalog.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class CatalogError(KeyError):
    pass


class InsufficientContents(ValueError):
    pass


class UndefinedRatio(ZeroDivisionError):
    pass


LOCAL, REMOTE_CACHE, REMOTE_DISK = "local", "remote_cache", "remote_disk"


@dataclass(frozen=True)
class TierLatencies:
    local_mem: float = 1.0
    remote_cache: float = 10.0
    remote_disk: float = 100.0

    def __post_init__(self):
        if not 0 <= self.local_mem < self.remote_cache < self.remote_disk:
            raise ValueError("latencies must satisfy local_mem < remote_cache < remote_disk")

    def scaled(self, k: float) -> "TierLatencies":
        return TierLatencies(self.local_mem * k, self.remote_cache * k, self.remote_disk * k)


@dataclass
class AccessStats:
    hits_local: int = 0
    hits_remote_cache: int = 0
    hits_remote_disk: int = 0
    bytes_local: int = 0
    bytes_remote_cache: int = 0
    bytes_remote_disk: int = 0
    evictions: int = 0
    evicted_bytes: int = 0

    @property
    def total(self) -> int:
        return self.hits_local + self.hits_remote_cache + self.hits_remote_disk

    def record(self, where: str, nbytes: int) -> None:
        if where == LOCAL:
            self.hits_local += 1
            self.bytes_local += nbytes
        elif where == REMOTE_CACHE:
            self.hits_remote_cache += 1
            self.bytes_remote_cache += nbytes
        else:
            self.hits_remote_disk += 1
            self.bytes_remote_disk += nbytes

    def merged(self, other: "AccessStats") -> "AccessStats":
        return AccessStats(*(a + b for a, b in zip(_fields(self), _fields(other))))


def _fields(s: AccessStats):
    return (s.hits_local, s.hits_remote_cache, s.hits_remote_disk, s.bytes_local,
            s.bytes_remote_cache, s.bytes_remote_disk, s.evictions, s.evicted_bytes)


def hit_ratio(stats: AccessStats, by_bytes: bool = False) -> float:
    if by_bytes:
        total = stats.bytes_local + stats.bytes_remote_cache + stats.bytes_remote_disk
        if total == 0:
            raise UndefinedRatio("no bytes accessed")
        return stats.bytes_local / total
    if stats.total == 0:
        raise UndefinedRatio("no accesses recorded")
    return stats.hits_local / stats.total


@dataclass(frozen=True)
class Block:
    block_id: int
    size: int
    access_count: int
    last_access: int


@dataclass
class EvictionSummary:
    capacity: int
    evicted: list[int] = field(default_factory=list)
    evicted_bytes: int = 0


class StorageTier:
    """Capacity-bounded block cache with LFU eviction.

    ``inflation`` scales each block's resident footprint, which models a
    cache that stores deserialized (larger) objects.  Admission on a miss
    that would require eviction is filtered through a bounded ghost table
    counting misses on non-resident blocks: the block gets in only when the
    least valuable victim's ``access_count`` is <= the incoming block's
    earlier misses.  Admission clears the ghost entry and restarts the
    block's count at 1.
    """

    def __init__(self, catalog_sizes, capacity: int, max_capacity: int | None = None,
                 inflation: float = 1.0, ghost_factor: int = 4, admission_filter: bool = True):
        self.sizes = np.asarray(catalog_sizes, dtype=np.int64)
        if np.any(self.sizes <= 0):
            raise ValueError("block sizes must be positive")
        n = len(self.sizes)
        self.stored = np.array([math.ceil(int(s) * inflation) for s in self.sizes], dtype=np.int64)
        self.max_capacity = capacity if max_capacity is None else max_capacity
        self.capacity = min(capacity, self.max_capacity)
        self.resident = np.zeros(n, dtype=bool)
        self.count = np.zeros(n, dtype=np.int64)
        self.last = np.zeros(n, dtype=np.int64)
        self.used = 0
        self.stats = AccessStats()
        self.admission_filter = admission_filter
        per_block = int(self.stored.min()) if n else 1
        self.ghost_limit = max(16, ghost_factor * max(1, self.max_capacity // per_block))
        self.ghost: OrderedDict[int, int] = OrderedDict()

    def __len__(self) -> int:
        return int(self.resident.sum())

    def _check(self, block_id: int) -> None:
        if not 0 <= block_id < len(self.sizes):
            raise CatalogError(block_id)

    def is_resident(self, block_id: int) -> bool:
        self._check(block_id)
        return bool(self.resident[block_id])

    def resident_blocks(self) -> list[Block]:
        return [Block(int(b), int(self.stored[b]), int(self.count[b]), int(self.last[b]))
                for b in np.flatnonzero(self.resident)]

    def history(self, block_id: int) -> int:
        return self.ghost.get(block_id, 0)

    def _remember(self, block_id: int) -> int:
        prior = self.ghost.pop(block_id, 0)
        self.ghost[block_id] = prior + 1
        while len(self.ghost) > self.ghost_limit:
            self.ghost.popitem(last=False)
        return prior

    def touch(self, block_id: int, now: int) -> None:
        """Local hit bookkeeping."""
        self.count[block_id] += 1
        self.last[block_id] = now

    def _victims(self, need: int) -> np.ndarray:
        idx = np.flatnonzero(self.resident)
        order = kernels.lfu_order(self.count[idx], self.last[idx], idx.astype(np.int64),
                                  self.stored[idx], np.int64(need))
        return idx[order]

    def _drop(self, victims) -> int:
        freed = int(self.stored[victims].sum())
        self.resident[victims] = False
        self.count[victims] = 0
        self.used -= freed
        self.stats.evictions += len(victims)
        self.stats.evicted_bytes += freed
        return freed

    def evict_lfu(self, bytes_needed: int) -> list[int]:
        if bytes_needed > self.used:
            raise InsufficientContents(f"need {bytes_needed} bytes but only {self.used} resident")
        if bytes_needed <= 0:
            return []
        victims = self._victims(bytes_needed)
        self._drop(victims)
        return [int(v) for v in victims]

    def set_capacity(self, target: int) -> EvictionSummary:
        if target < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = min(target, self.max_capacity)
        out = EvictionSummary(self.capacity)
        if self.used > self.capacity:
            before = self.used
            out.evicted = self.evict_lfu(self.used - self.capacity)
            out.evicted_bytes = before - self.used
        return out

    def admit(self, block_id: int, now: int, prior: int) -> bool:
        """Try to make ``block_id`` resident after a miss."""
        size = int(self.stored[block_id])
        if size > self.capacity:
            return False
        free = self.capacity - self.used
        if size > free:
            victims = self._victims(size - free)
            if self.admission_filter and int(self.count[victims].min()) > prior:
                return False
            self._drop(victims)
        self.ghost.pop(block_id, None)
        self.resident[block_id] = True
        self.count[block_id] = 1
        self.last[block_id] = now
        self.used += size
        return True

    def age(self) -> None:
        """Halve all resident frequencies (optional aging, off by default)."""
        self.count[self.resident] = np.maximum(1, self.count[self.resident] // 2)


class DataNode:
    """Backing-store server: LRU buffer cache in front of disk."""

    def __init__(self, buffer_cache_capacity: int):
        self.capacity = buffer_cache_capacity
        self.lru: OrderedDict[int, int] = OrderedDict()
        self.used = 0

    def read(self, block_id: int, size: int) -> bool:
        """Returns True on a buffer-cache hit; always leaves the block cached."""
        if block_id in self.lru:
            self.lru.move_to_end(block_id)
            return True
        if size > self.capacity:
            return False
        self.lru[block_id] = size
        self.used += size
        while self.used > self.capacity:
            _, s = self.lru.popitem(last=False)
            self.used -= s
        return False


class BackingStore:
    def __init__(self, catalog_sizes, data_nodes: list[DataNode], latencies: TierLatencies = TierLatencies()):
        self.sizes = np.asarray(catalog_sizes, dtype=np.int64)
        self.data_nodes = data_nodes
        self.latencies = latencies

    def placement(self, block_id: int) -> int:
        return block_id % len(self.data_nodes)

    def read(self, block_id: int) -> str:
        if not 0 <= block_id < len(self.sizes):
            raise CatalogError(block_id)
        dn = self.data_nodes[self.placement(block_id)]
        return REMOTE_CACHE if dn.read(block_id, int(self.sizes[block_id])) else REMOTE_DISK


@dataclass(frozen=True)
class AccessResult:
    tier_hit: str
    latency_ms: float
    admitted: bool = False


def access(tier: StorageTier, backing: BackingStore, block_id: int, now: int) -> AccessResult:
    """Read one block through the local tier, falling back to the backing store."""
    tier._check(block_id)
    size = int(tier.sizes[block_id])
    lat = backing.latencies
    if tier.resident[block_id]:
        tier.touch(block_id, now)
        tier.stats.record(LOCAL, size)
        return AccessResult(LOCAL, lat.local_mem)
    where = backing.read(block_id)
    tier.stats.record(where, size)
    prior = tier._remember(block_id)
    admitted = tier.admit(block_id, now, prior)
    return AccessResult(where, lat.remote_cache if where == REMOTE_CACHE else lat.remote_disk, admitted)
