"""Experiment configuration: dataclasses, desk/paper presets and YAML loading."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import ChannelParams
from .marl import Hyperparams
from .topology import Topology, generate_topology
from .workload import WorkloadConfig


@dataclass
class TopologyConfig:
    n_stations: int = 3
    n_users: int = 12
    radius: float = 2200.0
    station_power_db: float = 16.9
    cloud_power_db: float = 20.0
    backhaul_distance: float = 10_000.0
    arena: tuple[float, float, float, float] | None = None
    seed: int | None = None  # None -> follow the run seed
    file: str | None = None  # pinned layout (JSON), overrides generation

    def build(self, run_seed: int) -> Topology:
        if self.file:
            return Topology.load(self.file)
        seed = run_seed if self.seed is None else self.seed
        return generate_topology(
            seed, self.n_stations, self.n_users, self.radius, self.arena,
            self.station_power_db, self.cloud_power_db, self.backhaul_distance,
        )


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    marl: Hyperparams = field(default_factory=Hyperparams)
    capacity: int = 5
    cache_ratio: float | None = None
    n_cycles: int = 2000
    eval_fraction: float = 0.2
    seeds: tuple[int, ...] = (0, 1, 2)
    betas: tuple[float, ...] = (0.5, 0.7, 0.9, 1.1, 1.3, 1.5)
    ratios: tuple[float, ...] = (0.04, 0.1, 0.2, 0.4, 1.0)
    sweep_beta_capacity: int | None = None  # capacity for the beta sweep; None -> capacity
    ratio_beta: float = 1.3
    drift_period: int = 2000
    drift_epochs: int = 4
    jobs: int = 1

    def __post_init__(self):
        if self.cache_ratio is not None:
            cap = self.cache_ratio * self.workload.catalog_size
            if abs(cap - round(cap)) > 1e-9:
                raise ValueError(f"cache ratio {self.cache_ratio} x M={self.workload.catalog_size} is not integral")
            self.capacity = int(round(cap))
        if not 0 <= self.eval_fraction < 1:
            raise ValueError("eval_fraction must lie in [0, 1)")

    @property
    def n_eval(self) -> int:
        return int(round(self.eval_fraction * self.n_cycles))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_workload(self, **changes) -> "ExperimentConfig":
        return self.replace(workload=dataclasses.replace(self.workload, **changes))


def desk_config(**overrides) -> ExperimentConfig:
    """CI scale: M=50, U=12, N=3, capacity 5, 2000 cycles."""
    return ExperimentConfig(**overrides)


def paper_config(**overrides) -> ExperimentConfig:
    """M=500, U=30, N=5, capacity 40, 40 000 cycles, drift every 10 000 cycles."""
    base = dict(
        topology=TopologyConfig(n_stations=5, n_users=30),
        workload=WorkloadConfig(catalog_size=500),
        capacity=40,
        n_cycles=40_000,
        drift_period=10_000,
        ratios=(0.02, 0.04, 0.08, 0.1, 0.2),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


SCALES = {"desk": desk_config, "paper": paper_config}

_SECTIONS = {
    "topology": TopologyConfig,
    "channel": ChannelParams,
    "workload": WorkloadConfig,
    "marl": Hyperparams,
}
_TUPLES = {"arena", "seeds", "betas", "ratios", "scorer_hidden", "actor_hidden",
           "critic_hidden", "drift_beta_range"}


def _coerce(d: dict) -> dict:
    return {k: tuple(v) if k in _TUPLES and v is not None else v for k, v in d.items()}


def config_from_dict(data: dict, scale: str = "desk") -> ExperimentConfig:
    """Overlay a (possibly partial) nested mapping onto a scale preset."""
    base = SCALES[data.get("scale", scale)]()
    kwargs = {}
    for key, value in data.items():
        if key == "scale":
            continue
        if key in _SECTIONS:
            kwargs[key] = dataclasses.replace(getattr(base, key), **_coerce(value or {}))
        elif key in {f.name for f in dataclasses.fields(ExperimentConfig)}:
            kwargs[key] = _coerce({key: value})[key]
        else:
            raise ValueError(f"unknown config key {key!r}")
    return dataclasses.replace(base, **kwargs)


def load_config(path, scale: str = "desk") -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text()) or {}
    return config_from_dict(data, scale)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(v):
        if dataclasses.is_dataclass(v):
            return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v
    return plain(cfg)
