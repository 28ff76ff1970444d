"""Per-station cache state, the replace-one action space and LRU/LFU/FIFO.

Slot, request-slot and action indices are 0-based. Action 0 keeps the cache
unchanged; action ``nu >= 1`` maps row-major onto
``(evict_slot, request_slot) = divmod(nu - 1, n_connectable)``.
"""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .topology import Topology


class Policy(str, Enum):
    MARL = "marl"
    LRU = "lru"
    LFU = "lfu"
    FIFO = "fifo"

    @property
    def is_baseline(self) -> bool:
        return self is not Policy.MARL


@dataclass
class CacheState:
    """Ordered slots of one station's cache.

    ``last_used`` and ``inserted`` hold values of a per-cache logical clock
    that ticks on every touch, so several requests inside one cycle still
    have a strict order. ``inserted_cycle`` keeps the simulation cycle.
    """

    station_id: int
    capacity: int
    slots: list[int] = field(default_factory=list)
    last_used: list[int] = field(default_factory=list)
    use_count: list[int] = field(default_factory=list)
    inserted: list[int] = field(default_factory=list)
    inserted_cycle: list[int] = field(default_factory=list)
    clock: int = 0

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.check()

    def __len__(self):
        return len(self.slots)

    def __contains__(self, file_id) -> bool:
        return file_id in self.slots

    @property
    def full(self) -> bool:
        return len(self.slots) >= self.capacity

    def files(self) -> frozenset:
        return frozenset(self.slots)

    def check(self) -> None:
        if len(self.slots) > self.capacity:
            raise AssertionError(f"station {self.station_id}: {len(self.slots)} > capacity {self.capacity}")
        if len(set(self.slots)) != len(self.slots):
            raise AssertionError(f"station {self.station_id}: duplicate cached files {self.slots}")

    def _tick(self) -> int:
        self.clock += 1
        return self.clock

    def insert(self, file_id: int, cycle: int, slot: int | None = None) -> None:
        """Place ``file_id`` into ``slot`` (or append), resetting its metadata."""
        if file_id in self.slots:
            raise ValueError(f"file {file_id} already cached at station {self.station_id}")
        t = self._tick()
        if slot is None or slot >= len(self.slots):
            if self.full:
                raise ValueError("cache full; choose a slot to overwrite")
            self.slots.append(file_id)
            self.last_used.append(t)
            self.use_count.append(1)
            self.inserted.append(t)
            self.inserted_cycle.append(cycle)
        else:
            self.slots[slot] = file_id
            self.last_used[slot] = t
            self.use_count[slot] = 1
            self.inserted[slot] = t
            self.inserted_cycle[slot] = cycle

    def touch(self, file_id: int) -> None:
        """Register a hit on a cached file."""
        k = self.slots.index(file_id)
        self.last_used[k] = self._tick()
        self.use_count[k] += 1

    def snapshot(self) -> dict:
        return copy.deepcopy(self.__dict__)

    @classmethod
    def restore(cls, state: dict) -> "CacheState":
        return cls(**copy.deepcopy(state))


def cache_matrix(caches, catalog_size: int) -> np.ndarray:
    """Boolean N x M matrix with ``phi[i, f]`` set iff station i caches f."""
    phi = np.zeros((len(caches), catalog_size), dtype=bool)
    for i, c in enumerate(caches):
        phi[i, c.slots] = True
    return phi


def write_row_sums(path, rows) -> None:
    """CSV audit of cache occupancy: rows of ``(cycle, sums...)``."""
    rows = list(rows)
    n = len(rows[0][1]) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle"] + [f"station_{i}" for i in range(n)])
        for cycle, sums in rows:
            w.writerow([cycle, *map(int, sums)])


# -- action space --------------------------------------------------------

@dataclass(frozen=True)
class NoOp:
    pass


@dataclass(frozen=True)
class Replace:
    evict_slot: int
    request_slot: int


Action = NoOp | Replace


def action_space_size(cache_len: int, n_connectable: int) -> int:
    if cache_len < 0 or n_connectable < 0:
        raise ValueError("sizes must be >= 0")
    return cache_len * n_connectable + 1


def decode_action(nu: int, cache_len: int, n_connectable: int) -> Action:
    if not 0 <= nu < action_space_size(cache_len, n_connectable):
        raise ValueError(f"action id {nu} outside 0..{cache_len * n_connectable}")
    if nu == 0:
        return NoOp()
    evict, req = divmod(nu - 1, n_connectable)
    return Replace(evict, req)


def encode_action(action: Action, cache_len: int, n_connectable: int) -> int:
    if isinstance(action, NoOp):
        return 0
    if not (0 <= action.evict_slot < cache_len and 0 <= action.request_slot < n_connectable):
        raise ValueError(f"{action} out of bounds for {cache_len}x{n_connectable}")
    return 1 + action.evict_slot * n_connectable + action.request_slot


def apply_action(cache: CacheState, action: Action, requested_files, cycle: int) -> CacheState:
    """Execute a learner action in place and return the cache.

    ``requested_files[k]`` is the file requested this cycle by the station's
    k-th connectable user. Inserting a file the cache already holds is a no-op.
    """
    if isinstance(action, NoOp):
        return cache
    if not 0 <= action.evict_slot < cache.capacity:
        raise ValueError(f"evict slot {action.evict_slot} outside capacity {cache.capacity}")
    f = int(requested_files[action.request_slot])
    if f in cache:
        return cache
    cache.insert(f, cycle, slot=action.evict_slot)
    return cache


# -- baselines -------------------------------------------------------------

def _victim(policy: Policy, cache: CacheState) -> int:
    if policy is Policy.LRU:
        key = cache.last_used
    elif policy is Policy.LFU:
        key = cache.use_count
    elif policy is Policy.FIFO:
        key = cache.inserted
    else:
        raise ValueError(f"{policy} is not a baseline policy")
    # min() returns the first minimum: ties go to the lowest slot
    return min(range(len(cache.slots)), key=key.__getitem__)


def baseline_step(policy, cache: CacheState, request: int, cycle: int) -> CacheState:
    """Process one request under LRU, LFU or FIFO; mutates and returns ``cache``."""
    policy = Policy(policy)
    request = int(request)
    if request in cache:
        cache.touch(request)
        return cache
    if cache.capacity == 0:
        return cache
    if not cache.full:
        cache.insert(request, cycle)
    else:
        cache.insert(request, cycle, slot=_victim(policy, cache))
    return cache


def lookup(caches, topology: Topology, user_id: int, file_id: int) -> int | None:
    """Nearest covering station holding ``file_id``, or ``None`` on a miss."""
    holders = [i for i in topology.covering_stations(user_id) if file_id in caches[i]]
    if not holders:
        return None
    return min(holders, key=lambda i: (topology.distances[i, user_id], i))


def warm_fill(caches, topology: Topology, next_requests, catalog_size: int, max_cycles: int) -> int:
    """Fill each cache with the first distinct files its users request.

    ``next_requests()`` returns one cycle of requests; it is called until
    every cache is full or ``max_cycles`` is reached. Slots still empty are
    then filled with the lowest uncached file ids. Returns cycles consumed.
    """
    used = 0
    while used < max_cycles and not all(c.full for c in caches):
        reqs = next_requests()
        used += 1
        for c in caches:
            for u in topology.connectable_users(c.station_id):
                f = int(reqs[u])
                if not c.full and f not in c:
                    c.insert(f, 0)
    for c in caches:
        f = 0
        while not c.full and f < catalog_size:
            if f not in c:
                c.insert(f, 0)
            f += 1
    return used
