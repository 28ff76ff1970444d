"""Sliding-window request counters per station and the observations built from them."""
from __future__ import annotations

import copy
from collections import deque

import numpy as np

DEFAULT_WINDOWS = (10, 100, 1000)


class FeatureWindows:
    """Short/medium/long ring buffers of recent request file ids for every station.

    Counts are maintained incrementally alongside the buffers; ``recount``
    rebuilds them from scratch for auditing.
    """

    def __init__(self, n_stations: int, catalog_size: int, windows=DEFAULT_WINDOWS, normalize: bool = True):
        if any(w < 1 for w in windows):
            raise ValueError("window lengths must be >= 1")
        self.n_stations = n_stations
        self.catalog_size = catalog_size
        self.windows = tuple(int(w) for w in windows)
        self.normalize = normalize
        self.buffers = [[deque(maxlen=w) for w in self.windows] for _ in range(n_stations)]
        self.counts = np.zeros((n_stations, len(self.windows), catalog_size), dtype=np.int64)
        self._scale = 1.0 / np.array(self.windows, dtype=float)[:, None]

    def record_request(self, station_id: int, file_id: int) -> None:
        if not 0 <= file_id < self.catalog_size:
            raise ValueError(f"file id {file_id} outside 0..{self.catalog_size - 1}")
        counts = self.counts[station_id]
        for k, buf in enumerate(self.buffers[station_id]):
            if len(buf) == buf.maxlen:
                counts[k, buf[0]] -= 1
            buf.append(file_id)
            counts[k, file_id] += 1

    def record_cycle(self, topology, requests) -> None:
        """Broadcast each user's request to every station that covers the user."""
        for u, f in enumerate(requests):
            for i in topology.covering_stations(u):
                self.record_request(i, int(f))

    def recount(self, station_id: int) -> np.ndarray:
        out = np.zeros((len(self.windows), self.catalog_size), dtype=np.int64)
        for k, buf in enumerate(self.buffers[station_id]):
            for f in buf:
                out[k, f] += 1
        return out

    def file_features(self, station_id: int) -> np.ndarray:
        """``(M, 3)`` matrix: row f holds file f's short/medium/long features."""
        c = self.counts[station_id]
        return (c * self._scale if self.normalize else c.astype(float)).T

    def observation(self, station_id: int) -> np.ndarray:
        """Concatenated ``[short; medium; long]`` feature vector of length ``3 M``."""
        c = self.counts[station_id]
        return (c * self._scale if self.normalize else c.astype(float)).ravel()

    def global_state(self, order=None) -> np.ndarray:
        """Observations of all stations concatenated in ``order`` (default 0..N-1)."""
        order = range(self.n_stations) if order is None else order
        return np.concatenate([self.observation(i) for i in order])

    def copy(self) -> "FeatureWindows":
        return copy.deepcopy(self)
