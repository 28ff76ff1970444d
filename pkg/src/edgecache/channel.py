"""Rayleigh-faded links, per-frame capacity and frame-counted delivery delay.

A file of ``F`` bits needs the smallest number of frames ``T`` such that the
bits carried by frames ``1..T`` reach ``F``; every frame sees a fresh
exponential power gain with mean ``d ** -pathloss_exponent``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .topology import Topology, db_to_linear

UNIT_BITS = 96.13


@dataclass(frozen=True)
class ChannelParams:
    bandwidth: float = 1e6  # Hz
    noise_psd: float | None = None  # W/Hz; None -> calibrated, see below
    frame_duration: float = 1e-3  # s
    pathloss_exponent: float = 4.0
    max_frames: int = 1_000_000
    units_per_file: int = 100
    unit_bits: float = UNIT_BITS
    min_distance: float = 1.0  # m, keeps the mean gain finite

    def __post_init__(self):
        if self.noise_psd is None:
            # 1 km link at 16.9 dB sees a mean SNR of 10 dB
            psd = db_to_linear(16.9) * 1000.0 ** -self.pathloss_exponent / (self.bandwidth * 10.0)
            object.__setattr__(self, "noise_psd", psd)
        for name in ("bandwidth", "noise_psd", "frame_duration", "pathloss_exponent",
                     "unit_bits", "min_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_frames < 1 or self.units_per_file < 1:
            raise ValueError("max_frames and units_per_file must be >= 1")

    @property
    def file_bits(self) -> float:
        return self.units_per_file * self.unit_bits


@dataclass(frozen=True)
class Link:
    tx_power: float  # W
    distance: float  # m

    def __post_init__(self):
        if self.tx_power <= 0 or self.distance <= 0:
            raise ValueError("link power and distance must be positive")

    def mean_gain(self, params: ChannelParams) -> float:
        return self.distance ** -params.pathloss_exponent


class Transmission(NamedTuple):
    frames: int
    truncated: bool = False


class MissDelivery(NamedTuple):
    frames: int
    station: int
    truncated: bool = False


def sample_fading(link: Link, rng, params: ChannelParams | None = None, size=None):
    """Power gain ``|h|^2``: exponential with mean ``d^-pathloss_exponent``."""
    params = params or ChannelParams()
    return rng.exponential(link.mean_gain(params), size)


def capacity(z, link: Link, params: ChannelParams):
    """Shannon capacity ``B log2(1 + P z / (B sigma^2))`` in bits/s (scalar or array)."""
    snr_scale = link.tx_power / (params.bandwidth * params.noise_psd)
    return params.bandwidth * np.log2(1.0 + snr_scale * np.asarray(z, dtype=float))


def transmission_delay(file_bits: float, link: Link, params: ChannelParams, rng) -> Transmission:
    """Frames needed to push ``file_bits`` over ``link``.

    Fading is drawn in chunks sized from the mean-SNR estimate; the running
    total is accumulated left to right, so the result equals a frame-by-frame
    loop over the same draws. If ``max_frames`` is reached the cap is returned
    with ``truncated=True``.
    """
    if not file_bits > 0:
        raise ValueError("file_bits must be positive")
    mean_snr = link.tx_power * link.mean_gain(params) / (params.bandwidth * params.noise_psd)
    per_frame = params.frame_duration * params.bandwidth * math.log2(1.0 + mean_snr)
    estimate = file_bits / per_frame if per_frame > 0 else params.max_frames
    chunk = int(min(params.max_frames, max(8, 1.25 * estimate + 8)))

    total = 0.0
    done = 0
    while done < params.max_frames:
        n = min(chunk, params.max_frames - done)
        z = sample_fading(link, rng, params, n)
        bits = params.frame_duration * capacity(z, link, params)
        cum = np.cumsum(np.concatenate(([total], bits)))[1:]
        k = int(np.searchsorted(cum, file_bits, side="left"))
        if k < n:
            return Transmission(done + k + 1)
        total = float(cum[-1])
        done += n
    return Transmission(params.max_frames, True)


def station_link(topology: Topology, station_id: int, user_id: int, params: ChannelParams) -> Link:
    d = max(topology.distance(station_id, user_id), params.min_distance)
    return Link(topology.stations[station_id].tx_power, d)


def cloud_link(topology: Topology) -> Link:
    return Link(topology.cloud.tx_power, topology.cloud.backhaul_distance)


def hit_delay(topology: Topology, user_id: int, station_id: int, params: ChannelParams, rng) -> Transmission:
    """Single-hop delivery from a covering station that holds the file."""
    if not topology.covered(station_id, user_id):
        raise ValueError(f"station {station_id} does not cover user {user_id}")
    return transmission_delay(params.file_bits, station_link(topology, station_id, user_id, params), params, rng)


def miss_delay(topology: Topology, user_id: int, params: ChannelParams, rng) -> MissDelivery:
    """Cloud -> nearest covering station -> user, hops drawn in that order."""
    station = topology.nearest_station(user_id)
    first = transmission_delay(params.file_bits, cloud_link(topology), params, rng)
    second = transmission_delay(params.file_bits, station_link(topology, station, user_id, params), params, rng)
    return MissDelivery(first.frames + second.frames, station, first.truncated or second.truncated)


def mean_capacity(link: Link, params: ChannelParams) -> float:
    """Ergodic capacity ``E[C]`` in bits/s under Rayleigh fading (numerical quadrature)."""
    snr = link.tx_power * link.mean_gain(params) / (params.bandwidth * params.noise_psd)
    val, _ = integrate.quad(lambda t: math.log2(1.0 + snr * t) * math.exp(-t), 0.0, math.inf)
    return params.bandwidth * val


def expected_frames(link: Link, params: ChannelParams) -> float:
    """First-order estimate ``F / (T0 E[C])`` of the mean frame count."""
    return params.file_bits / (params.frame_duration * mean_capacity(link, params))
