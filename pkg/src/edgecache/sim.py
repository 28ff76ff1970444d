"""Simulation environment shared by the learner and the baseline policies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .caching import CacheState, Policy, baseline_step, cache_matrix, warm_fill
from .channel import ChannelParams, cloud_link, expected_frames, station_link
from .features import DEFAULT_WINDOWS, FeatureWindows
from .metrics import CycleOutcome, cycle_delay_accounting
from .topology import Topology
from .workload import Workload, WorkloadConfig


@dataclass
class Streams:
    """Independent generators derived from one seed."""

    workload: np.random.Generator
    channel: np.random.Generator
    policy: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "Streams":
        ss = np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in ss.spawn(3)))


class Environment:
    """Caches, feature windows, workload and channel for one simulation run.

    Every run of the same seed consumes the workload stream identically,
    whatever the caching policy, so all policies see the same request trace.
    """

    def __init__(self, topology: Topology, channel: ChannelParams, workload: WorkloadConfig,
                 capacity: int, seed, windows=DEFAULT_WINDOWS, warm_cycles: int | None = None):
        if not 0 <= capacity <= workload.catalog_size:
            raise ValueError(f"capacity {capacity} outside 0..{workload.catalog_size}")
        self.topology = topology
        self.channel = channel
        self.capacity = capacity
        self.catalog_size = workload.catalog_size
        self.streams = Streams.from_seed(seed)
        self.workload = Workload(workload, topology.n_users, self.streams.workload)
        self.caches = [CacheState(i, capacity) for i in range(topology.n_stations)]
        self.windows = FeatureWindows(topology.n_stations, self.catalog_size, windows)
        self.connectable = [topology.connectable_users(i) for i in range(topology.n_stations)]
        self.cycle = -1  # index of the cycle in progress; first scored cycle is 0
        self.trace: list[tuple[int, np.ndarray]] = []
        self._warm(warm_cycles if warm_cycles is not None else 20 * self.catalog_size)

    def _warm(self, max_cycles: int) -> None:
        # warm-up requests fill caches and feature windows; they are not scored
        def pull():
            reqs = self.workload.requests(0)
            self.windows.record_cycle(self.topology, reqs)
            return reqs
        self.warm_cycles = warm_fill(self.caches, self.topology, pull, self.catalog_size, max_cycles)

    def next_requests(self, replay=None) -> np.ndarray:
        self.cycle += 1
        reqs = self.workload.requests(self.cycle) if replay is None else np.asarray(replay, dtype=int)
        self.trace.append((self.cycle, reqs))
        return reqs

    def deliver(self, requests) -> CycleOutcome:
        return cycle_delay_accounting(self.topology, self.caches, requests, self.channel,
                                      self.streams.channel, cycle=self.cycle)

    def record(self, requests) -> None:
        self.windows.record_cycle(self.topology, requests)

    def requested_by_station(self, requests, station_id: int) -> np.ndarray:
        return np.asarray(requests)[self.connectable[station_id]]

    def baseline_update(self, policy: Policy, requests) -> None:
        """Each station runs the policy on the requests of the users it covers."""
        for i, cache in enumerate(self.caches):
            for f in self.requested_by_station(requests, i):
                baseline_step(policy, cache, int(f), self.cycle)

    def phi(self) -> np.ndarray:
        return cache_matrix(self.caches, self.catalog_size)

    def mean_miss_frames(self) -> float:
        """Expected all-miss delay averaged over users (reward scale)."""
        topo, p = self.topology, self.channel
        cloud = expected_frames(cloud_link(topo), p)
        hop = [expected_frames(station_link(topo, topo.nearest_station(j), j, p), p)
               for j in range(topo.n_users)]
        return cloud + float(np.mean(hop))

    def trace_rows(self):
        for cycle, reqs in self.trace:
            for u, f in enumerate(reqs):
                yield cycle, u, int(f)
