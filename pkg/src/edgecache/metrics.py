"""Per-cycle delay accounting, delay-reduction percentage and its running mean."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .caching import lookup
from .channel import ChannelParams, hit_delay, miss_delay
from .topology import Topology

MISS = -1


class UndefinedEta(ValueError):
    """The mean all-miss delay of a cycle is zero, so eta has no meaning."""


@dataclass
class CycleOutcome:
    cycle: int
    requested: np.ndarray  # file id per user
    server: np.ndarray  # serving station per user, MISS (-1) when fetched from the cloud
    delay: np.ndarray  # realised frames D_j
    miss_delay: np.ndarray  # all-miss frames D^_j (counterfactual on hits)
    truncated: bool = False

    @property
    def reduction(self) -> np.ndarray:
        return self.miss_delay - self.delay

    @property
    def delta_d(self) -> float:
        """Mean per-user delay reduction of the cycle."""
        return float(self.reduction.mean())

    @property
    def hits(self) -> int:
        return int((self.server != MISS).sum())

    @property
    def eta(self) -> float:
        return eta(self)


def cycle_delay_accounting(topology: Topology, caches, requests, params: ChannelParams, rng,
                           cycle: int = 0) -> CycleOutcome:
    """Serve one request per user and record realised and all-miss delays.

    Users are processed in id order. A hit draws the serving hop first and
    then an independent cloud + nearest-station delivery as the counterfactual;
    a miss is delivered through the cloud and reduces nothing.
    """
    n = topology.n_users
    if len(requests) != n:
        raise ValueError(f"expected {n} requests, got {len(requests)}")
    server = np.full(n, MISS, dtype=int)
    delay = np.zeros(n, dtype=np.int64)
    baseline = np.zeros(n, dtype=np.int64)
    truncated = False
    for j in range(n):
        f = int(requests[j])
        i = lookup(caches, topology, j, f)
        if i is None:
            m = miss_delay(topology, j, params, rng)
            delay[j] = baseline[j] = m.frames
            truncated |= m.truncated
        else:
            h = hit_delay(topology, j, i, params, rng)
            m = miss_delay(topology, j, params, rng)
            server[j] = i
            delay[j] = h.frames
            baseline[j] = m.frames
            truncated |= h.truncated or m.truncated
    return CycleOutcome(cycle, np.asarray(requests, dtype=int).copy(), server, delay, baseline, truncated)


def eta(outcome: CycleOutcome) -> float:
    """Delay reduction as a percentage of the mean all-miss delay."""
    mean_miss = float(outcome.miss_delay.mean())
    if not mean_miss > 0:
        raise UndefinedEta(f"cycle {outcome.cycle}: mean all-miss delay is {mean_miss}")
    return outcome.delta_d / mean_miss * 100.0


def running_average_eta(series) -> np.ndarray:
    """Prefix means of a per-cycle eta series."""
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValueError("empty eta series")
    return np.cumsum(s) / np.arange(1, s.size + 1)
