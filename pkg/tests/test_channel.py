import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgecache.channel import (
    ChannelParams, Link, capacity, expected_frames, hit_delay, mean_capacity, miss_delay,
    sample_fading, transmission_delay, cloud_link, station_link,
)
from conftest import ConstantFading, line_topology, z_for_frame_bits


def replay_delay(file_bits, link, params, seed):
    """Frame-by-frame loop over scalar draws from a fresh generator."""
    rng = np.random.default_rng(seed)
    scale = link.distance ** -params.pathloss_exponent
    snr_scale = link.tx_power / (params.bandwidth * params.noise_psd)
    total, t = 0.0, 0
    while True:
        z = rng.exponential(scale)
        total += params.frame_duration * (params.bandwidth * math.log2(1.0 + snr_scale * z))
        t += 1
        if file_bits <= total:
            return t


def test_default_noise_calibration(params):
    snr = 10 ** 1.69 * 1000.0 ** -4 / (params.bandwidth * params.noise_psd)
    assert snr == pytest.approx(10.0)
    assert params.file_bits == pytest.approx(100 * 96.13)


@pytest.mark.parametrize("d", [1.0, 10.0])
def test_fading_mean(d):
    rng = np.random.default_rng(123)
    z = sample_fading(Link(1.0, d), rng, size=1_000_000)
    assert z.min() >= 0
    assert z.mean() == pytest.approx(d ** -4, rel=0.01)


def test_capacity_examples(params):
    link = Link(2.0, 100.0)
    z_one = params.bandwidth * params.noise_psd / link.tx_power
    assert capacity(z_one, link, params) == pytest.approx(params.bandwidth)
    assert capacity(0.0, link, params) == 0.0
    assert capacity(3 * z_one, link, params) == pytest.approx(2e6)


@given(st.floats(0, 1e-6), st.floats(0, 1e-6), st.floats(0.1, 100), st.floats(0.1, 100))
def test_capacity_monotone(z1, z2, p1, p2):
    params = ChannelParams()
    lo, hi = sorted([z1, z2])
    plo, phi = sorted([p1, p2])
    assert capacity(lo, Link(plo, 10.0), params) <= capacity(hi, Link(plo, 10.0), params)
    assert capacity(hi, Link(plo, 10.0), params) <= capacity(hi, Link(phi, 10.0), params)


def test_stub_one_frame(params):
    link = Link(50.0, 500.0)
    z = z_for_frame_bits(params.file_bits * 1.0000001, link, params)
    assert transmission_delay(params.file_bits, link, params, ConstantFading(z)).frames == 1


def test_stub_three_frames(params):
    link = Link(50.0, 500.0)
    z = z_for_frame_bits(params.file_bits / 3 * 1.0000001, link, params)
    assert transmission_delay(params.file_bits, link, params, ConstantFading(z)).frames == 3


def test_matches_replay_oracle_seed42(params):
    link = Link(10 ** 1.69, 1000.0)
    got = transmission_delay(params.file_bits, link, params, np.random.default_rng(42))
    assert got.frames == replay_delay(params.file_bits, link, params, 42)
    assert not got.truncated


def test_matches_replay_oracle_many_links(params):
    rng = np.random.default_rng(2024)
    for seed in range(200):
        link = Link(float(rng.uniform(1, 100)), float(rng.uniform(50, 3000)))
        got = transmission_delay(params.file_bits, link, params, np.random.default_rng(seed))
        assert got.frames == replay_delay(params.file_bits, link, params, seed)


def test_minimality(params):
    link = Link(10.0, 1500.0)
    t = transmission_delay(params.file_bits, link, params, np.random.default_rng(5)).frames
    z = np.random.default_rng(5).exponential(link.distance ** -4, size=t)
    bits = np.cumsum(params.frame_duration * capacity(z, link, params))
    assert bits[t - 2] < params.file_bits <= bits[t - 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(100, 50_000), st.floats(100, 50_000))
def test_monotone_in_file_size(seed, f1, f2):
    params = ChannelParams()
    link = Link(20.0, 800.0)
    lo, hi = sorted([f1, f2])
    t_lo = transmission_delay(lo, link, params, np.random.default_rng(seed)).frames
    t_hi = transmission_delay(hi, link, params, np.random.default_rng(seed)).frames
    assert t_lo <= t_hi


def test_truncation_flag():
    params = ChannelParams(max_frames=5)
    res = transmission_delay(params.file_bits, Link(1e-3, 5000.0), params, np.random.default_rng(0))
    assert res == (5, True)


def test_rejects_empty_file(params):
    with pytest.raises(ValueError):
        transmission_delay(0.0, Link(1.0, 1.0), params, np.random.default_rng(0))


def test_hit_delay_stub(params):
    topo = line_topology([300.0])
    link = station_link(topo, 0, 0, params)
    z = z_for_frame_bits(params.file_bits * 1.0000001, link, params)
    assert hit_delay(topo, 0, 0, params, ConstantFading(z)).frames == 1


def test_hit_delay_uncovered(params):
    topo = line_topology([300.0, 2500.0], station_xs=(0.0, 2000.0))
    with pytest.raises(ValueError):
        hit_delay(topo, 1, 0, params, np.random.default_rng(0))


def test_miss_single_station(params):
    topo = line_topology([300.0])
    assert miss_delay(topo, 0, params, np.random.default_rng(0)).station == 0


def test_miss_delay_is_sum_of_hops(params):
    topo = line_topology([0.0, 600.0], station_xs=(0.0, 900.0))
    for user in (0, 1):
        got = miss_delay(topo, user, params, np.random.default_rng(9))
        rng = np.random.default_rng(9)
        a = transmission_delay(params.file_bits, cloud_link(topo), params, rng)
        b = transmission_delay(params.file_bits, station_link(topo, got.station, user, params), params, rng)
        assert got.frames == a.frames + b.frames
    assert miss_delay(topo, 1, params, np.random.default_rng(0)).station == 1


def test_zero_distance_user_with_stub(params):
    topo = line_topology([0.0])
    # gain large enough that every hop finishes in one frame
    res = miss_delay(topo, 0, params, ConstantFading(1e6))
    assert res.frames == 2


def test_hit_cheaper_than_miss_on_average(params):
    topo = line_topology([700.0])
    rng = np.random.default_rng(77)
    hits = [hit_delay(topo, 0, 0, params, rng).frames for _ in range(10_000)]
    misses = [miss_delay(topo, 0, params, rng).frames for _ in range(2_000)]
    assert np.mean(hits) <= np.mean(misses)


def test_expected_frames_close_to_simulation(params):
    link = Link(10 ** 1.69, 2200.0)
    rng = np.random.default_rng(3)
    sims = [transmission_delay(params.file_bits, link, params, rng).frames for _ in range(2000)]
    assert np.mean(sims) == pytest.approx(expected_frames(link, params), rel=0.1)
    assert mean_capacity(link, params) > 0
