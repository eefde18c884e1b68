import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_dqn import channel
from noma_dqn.channel import PropagationConfig


def naive_sinr(i, gains, powers, noise):
    interference = 0.0
    for j in range(len(gains)):
        if j != i:
            interference += gains[j] * powers[j]
    return gains[i] * powers[i] / (interference + noise)


@pytest.mark.parametrize("g,d,n,expected", [
    (1.0, 1.0, 2, 1.0),
    (1.0, 2.0, 2, 0.25),
    (0.5, 10.0, 2, 0.005),
])
def test_channel_gain_examples(g, d, n, expected):
    assert channel.channel_gain(g, d, n) == expected


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_channel_gain_rejects_nonpositive_distance(d):
    with pytest.raises(ValueError):
        channel.channel_gain(1.0, d, 2)


def test_channel_gain_scaling_law():
    assert channel.channel_gain(0.7, 6.0, 1) == channel.channel_gain(0.7, 3.0, 1) / 2
    assert channel.channel_gain(0.7, 6.0, 2) == channel.channel_gain(0.7, 3.0, 2) / 4


def test_path_loss_examples():
    cfg = PropagationConfig()
    assert channel.path_loss_db(cfg.reference_distance, cfg) == cfg.reference_path_loss_db
    assert channel.path_loss_db(10.0, cfg) == pytest.approx(50.0, rel=1e-12)
    assert channel.path_loss_db(10.0, cfg, 3.2) == pytest.approx(53.2, rel=1e-12)


def test_path_loss_below_reference_distance():
    with pytest.raises(ValueError):
        channel.path_loss_db(0.5, PropagationConfig())


def test_log_distance_gain_mode():
    cfg = PropagationConfig()
    # 50 dB at 10 m -> 1e-5 linear
    assert channel.log_distance_gain(1.0, 10.0, cfg) == pytest.approx(1e-5, rel=1e-12)
    assert channel.log_distance_gain(2.0, 10.0, cfg) == pytest.approx(2e-5, rel=1e-12)


def test_propagation_config_validation():
    with pytest.raises(ValueError, match="path_loss_exponent"):
        PropagationConfig(path_loss_exponent=0.5)
    with pytest.raises(ValueError, match="noise_power"):
        PropagationConfig(noise_power=0.0)
    with pytest.raises(ValueError, match="gain_model"):
        PropagationConfig(gain_model="free_space")


def test_fading_mean_and_support():
    draws = channel.sample_fading(np.random.default_rng(7), 10**6)
    assert abs(draws.mean() - 1.0) < 0.01
    assert (draws >= 0).all()


def test_fading_deterministic():
    a = channel.sample_fading(np.random.default_rng(3), 100)
    b = channel.sample_fading(np.random.default_rng(3), 100)
    assert np.array_equal(a, b)


def test_sinr_examples():
    assert channel.sinr(0, {0: (1.0, 1.0)}, 1.0) == 1.0
    two = channel.sinr(0, {0: (1.0, 1.0), 1: (1.0, 1.0)}, 1e-6)
    assert two == pytest.approx(1.0 / (1.0 + 1e-6), rel=1e-12)
    assert two < 1.0


def test_sinr_missing_device():
    with pytest.raises(ValueError):
        channel.sinr(3, {0: (1.0, 1.0)}, 1e-6)


def test_sinr_matches_naive_resummation():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        size = rng.integers(1, 6)
        gains = rng.exponential(1.0, size) / rng.uniform(1, 70, size) ** 2
        powers = rng.uniform(0.1, 1.0, size)
        noise = 10 ** rng.uniform(-8, -1)
        i = int(rng.integers(size))
        got = channel.sinr(i, {j: (gains[j], powers[j]) for j in range(size)}, noise)
        assert got == pytest.approx(naive_sinr(i, gains, powers, noise), rel=1e-12)


def test_cluster_sinr_agrees_with_scalar_sinr():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n, channels = 25, 10
        gains = rng.exponential(1.0, n) / rng.uniform(1, 70, n) ** 2
        powers = rng.choice([0.25, 0.5, 0.75, 1.0], n)
        assign = rng.integers(0, channels, n)
        vec = channel.cluster_sinr(gains, powers, assign, channels, 1e-6)
        for i in range(n):
            members = np.flatnonzero(assign == assign[i])
            expected = channel.sinr(i, {j: (gains[j], powers[j]) for j in members}, 1e-6)
            assert vec[i] == pytest.approx(expected, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    gains=st.lists(st.floats(1e-6, 10.0), min_size=2, max_size=5),
    powers=st.lists(st.floats(0.01, 1.0), min_size=5, max_size=5),
    bump=st.floats(1e-3, 1.0),
    which=st.integers(1, 4),
)
def test_interferer_power_strictly_lowers_sinr(gains, powers, bump, which):
    n = len(gains)
    j = which % n or 1
    base = {k: (gains[k], powers[k]) for k in range(n)}
    louder = dict(base)
    louder[j] = (gains[j], powers[j] + bump)
    assert channel.sinr(0, louder, 1e-6) < channel.sinr(0, base, 1e-6)


@pytest.mark.parametrize("s,expected", [(0.0, 0.0), (1.0, 1.0), (3.0, 2.0)])
def test_throughput_examples(s, expected):
    assert channel.throughput_bps_hz(s) == expected


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e9), st.floats(0, 1e9))
def test_throughput_monotone(a, b):
    lo, hi = sorted((a, b))
    assert channel.throughput_bps_hz(lo) <= channel.throughput_bps_hz(hi)


def test_throughput_rejects_negative():
    with pytest.raises(ValueError):
        channel.throughput_bps_hz(-0.1)


def test_latency_examples():
    assert channel.latency_seconds(4096, 1.0, 20e6) == pytest.approx(0.2048e-3, rel=1e-12)
    assert channel.latency_seconds(12000, 2.0, 20e6) == pytest.approx(0.3e-3, rel=1e-12)
    assert channel.latency_seconds(8192, 0.0, 20e6) == channel.INFINITE_LATENCY
    assert math.isinf(channel.latency_seconds(1, 0.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**6), st.floats(1e-3, 30.0), st.floats(1e3, 1e9))
def test_latency_inverse_in_rate(bits, se, bw):
    assert channel.latency_seconds(bits, 2 * se, bw) == channel.latency_seconds(bits, se, bw) / 2
