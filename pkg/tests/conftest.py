import numpy as np
import pytest

from edgecache.channel import ChannelParams
from edgecache.topology import BaseStation, CloudDataCenter, Point, Topology, User


class ConstantFading:
    """Stands in for a numpy Generator: every fading draw equals ``z``."""

    def __init__(self, z):
        self.z = z

    def exponential(self, scale, size=None):
        if size is None:
            return self.z
        return np.full(size, self.z)


def z_for_frame_bits(bits_per_frame, link, params):
    """Gain that makes one frame carry exactly ``bits_per_frame`` bits."""
    snr = 2.0 ** (bits_per_frame / (params.frame_duration * params.bandwidth)) - 1.0
    return snr * params.bandwidth * params.noise_psd / link.tx_power


def line_topology(user_xs, station_xs=(0.0,), radius=1000.0, power=50.0, cloud_power=100.0):
    stations = [BaseStation(i, Point(x, 0.0), radius, power) for i, x in enumerate(station_xs)]
    users = [User(j, Point(x, 0.0)) for j, x in enumerate(user_xs)]
    return Topology.build(stations, users, CloudDataCenter(cloud_power, 10_000.0))


@pytest.fixture
def params():
    return ChannelParams()


@pytest.fixture
def constant_fading():
    return ConstantFading
