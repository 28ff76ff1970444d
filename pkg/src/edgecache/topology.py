"""Geometric layout of the cloud, base stations and users.

Stations sit on a jittered grid inside a rectangular arena; users are
rejection-sampled inside the union of the station disks so every user is
covered by at least one station. Station and user ids are 0-based indices.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigurationError(ValueError):
    """Raised for parameter combinations that cannot produce a valid layout."""


def db_to_linear(db: float) -> float:
    """Convert a power in dB to linear watts: 10 ** (dB / 10)."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def distance(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: Point
    radius: float
    tx_power: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")


@dataclass(frozen=True)
class CloudDataCenter:
    tx_power: float
    backhaul_distance: float = 10_000.0

    def __post_init__(self):
        if self.tx_power <= 0 or self.backhaul_distance <= 0:
            raise ValueError("cloud tx_power and backhaul_distance must be positive")


@dataclass(frozen=True)
class User:
    id: int
    position: Point
    group: int = 0


@dataclass(frozen=True)
class Topology:
    stations: tuple[BaseStation, ...]
    users: tuple[User, ...]
    cloud: CloudDataCenter
    coverage: np.ndarray = field(repr=False)  # (N, U) bool, inclusive radius
    distances: np.ndarray = field(repr=False)  # (N, U) meters

    @classmethod
    def build(cls, stations, users, cloud) -> "Topology":
        stations = tuple(stations)
        users = tuple(users)
        dist = np.array(
            [[s.position.distance(u.position) for u in users] for s in stations],
            dtype=float,
        ).reshape(len(stations), len(users))
        radii = np.array([s.radius for s in stations], dtype=float).reshape(-1, 1)
        cov = dist <= radii
        cov.setflags(write=False)
        dist.setflags(write=False)
        uncovered = np.flatnonzero(~cov.any(axis=0))
        if uncovered.size:
            raise ConfigurationError(f"users {uncovered.tolist()} are not covered by any station")
        return cls(stations, users, cloud, cov, dist)

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def covered(self, station_id: int, user_id: int) -> bool:
        return bool(self.coverage[station_id, user_id])

    def connectable_users(self, station_id: int) -> list[int]:
        return np.flatnonzero(self.coverage[station_id]).tolist()

    def covering_stations(self, user_id: int) -> list[int]:
        return np.flatnonzero(self.coverage[:, user_id]).tolist()

    def distance(self, station_id: int, user_id: int) -> float:
        return float(self.distances[station_id, user_id])

    def nearest_station(self, user_id: int) -> int:
        """Closest covering station; ties go to the lowest id."""
        cov = self.covering_stations(user_id)
        return min(cov, key=lambda i: (self.distances[i, user_id], i))

    def with_groups(self, groups) -> "Topology":
        users = [User(u.id, u.position, int(g)) for u, g in zip(self.users, groups)]
        return Topology(self.stations, tuple(users), self.cloud, self.coverage, self.distances)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "cloud": {
                "tx_power": self.cloud.tx_power,
                "backhaul_distance": self.cloud.backhaul_distance,
            },
            "stations": [
                {
                    "id": s.id,
                    "x": s.position.x,
                    "y": s.position.y,
                    "radius": s.radius,
                    "tx_power": s.tx_power,
                }
                for s in self.stations
            ],
            "users": [
                {"id": u.id, "x": u.position.x, "y": u.position.y, "group": u.group}
                for u in self.users
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        if data.get("version", 1) != 1:
            raise ConfigurationError(f"unsupported topology version {data.get('version')}")
        cloud = CloudDataCenter(**data["cloud"])
        stations = [
            BaseStation(int(s["id"]), Point(s["x"], s["y"]), s["radius"], s["tx_power"])
            for s in data["stations"]
        ]
        users = [
            User(int(u["id"]), Point(u["x"], u["y"]), int(u.get("group", 0)))
            for u in data["users"]
        ]
        for k, s in enumerate(stations):
            if s.id != k:
                raise ConfigurationError("station ids must be 0..N-1 in order")
        for k, u in enumerate(users):
            if u.id != k:
                raise ConfigurationError("user ids must be 0..U-1 in order")
        return cls.build(stations, users, cloud)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "Topology":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_arena(n_stations: int, radius: float) -> tuple[float, float, float, float]:
    """Square-ish arena whose grid spacing (1.5 R) makes neighbouring cells overlap."""
    cols = math.ceil(math.sqrt(n_stations))
    rows = math.ceil(n_stations / cols)
    spacing = 1.5 * radius
    return (0.0, 0.0, cols * spacing, rows * spacing)


def generate_topology(
    seed,
    n_stations: int,
    n_users: int,
    radius: float = 2200.0,
    arena: tuple[float, float, float, float] | None = None,
    station_power_db: float = 16.9,
    cloud_power_db: float = 20.0,
    backhaul_distance: float = 10_000.0,
    jitter: float = 0.25,
    min_separation: float | None = None,
) -> Topology:
    """Generate a random layout.

    Parameters
    ----------
    seed : int or numpy Generator
        Seed (or generator) for station jitter and user placement.
    arena : (xmin, ymin, xmax, ymax), optional
        Bounding box for station centres. Defaults to :func:`default_arena`.
    jitter : float
        Station offset from its grid cell centre, as a fraction of the cell size.
    min_separation : float, optional
        Smallest admissible grid cell size; defaults to ``radius / 2``.
    """
    if n_stations < 1 or n_users < 1:
        raise ConfigurationError("need at least one station and one user")
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if arena is None:
        arena = default_arena(n_stations, radius)
    xmin, ymin, xmax, ymax = arena
    width, height = xmax - xmin, ymax - ymin
    if width <= 0 or height <= 0:
        raise ConfigurationError(f"degenerate arena {arena}")

    cols = math.ceil(math.sqrt(n_stations))
    rows = math.ceil(n_stations / cols)
    cell_w, cell_h = width / cols, height / rows
    if min_separation is None:
        min_separation = radius / 2
    if n_stations > 1 and min(cell_w, cell_h) < min_separation:
        raise ConfigurationError(
            f"arena {arena} too small for {n_stations} stations "
            f"(cell {min(cell_w, cell_h):.1f} m < {min_separation:.1f} m)"
        )

    power = db_to_linear(station_power_db)
    stations = []
    for k in range(n_stations):
        r, c = divmod(k, cols)
        dx, dy = rng.uniform(-jitter, jitter, size=2)
        x = xmin + (c + 0.5 + dx) * cell_w
        y = ymin + (r + 0.5 + dy) * cell_h
        stations.append(BaseStation(k, Point(float(x), float(y)), radius, power))

    centers = np.array([[s.position.x, s.position.y] for s in stations])
    lo = centers.min(axis=0) - radius
    hi = centers.max(axis=0) + radius
    users = []
    while len(users) < n_users:
        x, y = rng.uniform(lo, hi)
        pos = Point(float(x), float(y))
        # same distance rule as Topology.coverage
        if any(s.position.distance(pos) <= s.radius for s in stations):
            users.append(User(len(users), pos))

    cloud = CloudDataCenter(db_to_linear(cloud_power_db), backhaul_distance)
    return Topology.build(stations, users, cloud)
