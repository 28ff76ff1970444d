"""Group-correlated Zipf request generation with optional popularity drift."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ZipfParams:
    exponent: float
    catalog_size: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("Zipf exponent must be >= 0")
        if self.catalog_size < 1:
            raise ValueError("catalog_size must be >= 1")

    def pmf(self) -> np.ndarray:
        """Probabilities of ranks 1..M as an array of length M."""
        w = np.arange(1, self.catalog_size + 1, dtype=float) ** -self.exponent
        return w / math.fsum(w)


def zipf_pmf(k: int, params: ZipfParams) -> float:
    """Probability of the file at popularity rank ``k`` (1-based)."""
    if not 1 <= k <= params.catalog_size:
        raise ValueError(f"rank {k} outside 1..{params.catalog_size}")
    norm = math.fsum(m ** -params.exponent for m in range(1, params.catalog_size + 1))
    return k ** -params.exponent / norm


@dataclass
class PreferenceProfile:
    user_id: int
    rank: np.ndarray  # rank[k - 1] is the file id at popularity rank k
    zipf: ZipfParams
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._cdf = np.cumsum(self.zipf.pmf())

    def sample_rank(self, rng) -> int:
        idx = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return min(idx, self.zipf.catalog_size - 1) + 1


def sample_request(profile: PreferenceProfile, rng) -> int:
    """Draw one file id from the user's preference."""
    return int(profile.rank[profile.sample_rank(rng) - 1])


def default_perturbation(catalog_size: int) -> int:
    return math.ceil(0.05 * catalog_size)


def perturb_rank(base: np.ndarray, n_swaps: int, rng) -> np.ndarray:
    """Apply ``n_swaps`` random adjacent transpositions to a copy of ``base``."""
    rank = base.copy()
    if len(rank) < 2:
        return rank
    for i in rng.integers(0, len(rank) - 1, size=n_swaps):
        rank[i], rank[i + 1] = rank[i + 1], rank[i]
    return rank


def kendall_tau_distance(a, b) -> int:
    """Number of discordant pairs between two orderings of the same items."""
    pos = {item: i for i, item in enumerate(b)}
    seq = [pos[item] for item in a]
    n = len(seq)
    return sum(1 for i in range(n) for j in range(i + 1, n) if seq[i] > seq[j])


@dataclass
class PopularityEpoch:
    start_cycle: int
    beta: float
    group_base_ranks: np.ndarray  # (G, M)
    profiles: list[PreferenceProfile]


def build_profiles(rng, n_users: int, n_groups: int, zipf: ZipfParams,
                   perturbation_strength: int | None = None, groups=None):
    """Draw group base rankings and per-user perturbed rankings.

    Returns ``(profiles, group_base_ranks, groups)``. ``groups`` is drawn
    uniformly when not supplied, independently of user location.
    """
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if perturbation_strength is None:
        perturbation_strength = default_perturbation(zipf.catalog_size)
    if groups is None:
        groups = rng.integers(0, n_groups, size=n_users)
    groups = np.asarray(groups, dtype=int)
    bases = np.stack([rng.permutation(zipf.catalog_size) for _ in range(n_groups)])
    profiles = [
        PreferenceProfile(u, perturb_rank(bases[groups[u]], perturbation_strength, rng), zipf)
        for u in range(n_users)
    ]
    return profiles, bases, groups


@dataclass
class WorkloadConfig:
    catalog_size: int = 50
    beta: float = 1.3
    n_groups: int = 5
    perturbation_strength: int | None = None
    drift_enabled: bool = False
    drift_period: int = 10_000
    drift_beta_range: tuple[float, float] = (1.1, 1.5)


class Workload:
    """Per-cycle request source: one request per user per cycle.

    Drift re-draws rankings and the exponent at multiples of
    ``drift_period``; agents only ever see the resulting requests.
    """

    def __init__(self, config: WorkloadConfig, n_users: int, rng):
        self.config = config
        self.n_users = n_users
        self.rng = rng
        self.groups = None
        self.epochs: list[PopularityEpoch] = []
        self._new_epoch(0, config.beta)

    @property
    def epoch(self) -> PopularityEpoch:
        return self.epochs[-1]

    def _new_epoch(self, cycle: int, beta: float) -> PopularityEpoch:
        zipf = ZipfParams(beta, self.config.catalog_size)
        profiles, bases, self.groups = build_profiles(
            self.rng, self.n_users, self.config.n_groups, zipf,
            self.config.perturbation_strength, self.groups,
        )
        epoch = PopularityEpoch(cycle, beta, bases, profiles)
        self._ranks = np.stack([p.rank for p in profiles])
        self._cdf = np.cumsum(zipf.pmf())
        self.epochs.append(epoch)
        return epoch

    def advance_epoch(self, cycle: int) -> PopularityEpoch | None:
        """Start a new epoch if ``cycle`` is a positive multiple of the drift period."""
        if cycle < 0:
            raise ValueError("cycle must be >= 0")
        cfg = self.config
        if not cfg.drift_enabled or cycle == 0 or cycle % cfg.drift_period:
            return None
        if cycle == self.epoch.start_cycle:
            return None
        beta = float(self.rng.uniform(*cfg.drift_beta_range))
        return self._new_epoch(cycle, beta)

    def requests(self, cycle: int) -> np.ndarray:
        """File ids requested by users ``0..U-1`` in ``cycle``."""
        self.advance_epoch(cycle)
        idx = np.searchsorted(self._cdf, self.rng.random(self.n_users), side="right")
        idx = np.minimum(idx, self.config.catalog_size - 1)
        return self._ranks[np.arange(self.n_users), idx]


def write_trace(path, rows) -> None:
    """Write ``(cycle, user_id, file_id)`` rows as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "user_id", "file_id"])
        w.writerows(rows)


def read_trace(path) -> dict[int, np.ndarray]:
    """Load a trace CSV into ``{cycle: file ids ordered by user}``."""
    by_cycle: dict[int, dict[int, int]] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            by_cycle.setdefault(int(row["cycle"]), {})[int(row["user_id"])] = int(row["file_id"])
    out = {}
    for cycle, reqs in sorted(by_cycle.items()):
        out[cycle] = np.array([reqs[u] for u in sorted(reqs)], dtype=int)
    return out
