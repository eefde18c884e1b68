"""Propagation and rate math for the uplink NOMA channel.

Every function here is pure: randomness only enters through an explicitly
passed ``numpy.random.Generator``. Scalars and numpy arrays are both
accepted wherever the operation is elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

INFINITE_LATENCY = math.inf

GAIN_MODELS = ("power_law", "log_distance")


@dataclass(frozen=True)
class PropagationConfig:
    path_loss_exponent: float = 2.0
    reference_distance: float = 1.0  # meters
    reference_path_loss_db: float = 30.0
    shadow_sigma_db: float = 0.0
    noise_power: float = 1e-6  # watts
    # "power_law": h = g / d^n; "log_distance": h = g * 10^(-PL(d)/10)
    gain_model: str = "power_law"

    def __post_init__(self):
        if not self.path_loss_exponent >= 1:
            raise ValueError(f"path_loss_exponent must be >= 1, got {self.path_loss_exponent}")
        if not self.reference_distance > 0:
            raise ValueError(f"reference_distance must be > 0, got {self.reference_distance}")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be > 0, got {self.noise_power}")
        if not self.shadow_sigma_db >= 0:
            raise ValueError(f"shadow_sigma_db must be >= 0, got {self.shadow_sigma_db}")
        if self.gain_model not in GAIN_MODELS:
            raise ValueError(f"gain_model must be one of {GAIN_MODELS}, got {self.gain_model!r}")


@dataclass(frozen=True)
class ChannelRealization:
    device_id: int
    distance: float
    fading: float
    gain: float


def channel_gain(fading, distance, n):
    """Linear gain ``fading / distance**n``."""
    d = np.asarray(distance, dtype=float)
    g = np.asarray(fading, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    if np.any(g < 0):
        raise ValueError("fading coefficient must be >= 0")
    out = g / d**n
    return float(out) if out.ndim == 0 else out


def path_loss_db(distance, cfg: PropagationConfig, shadow_draw=0.0):
    """Log-distance path loss in dB with an additive shadowing term."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < cfg.reference_distance):
        raise ValueError(
            f"distance must be >= reference distance {cfg.reference_distance}"
        )
    pl = (
        cfg.reference_path_loss_db
        + 10.0 * cfg.path_loss_exponent * np.log10(d / cfg.reference_distance)
        + shadow_draw
    )
    return float(pl) if np.ndim(pl) == 0 else pl


def log_distance_gain(fading, distance, cfg: PropagationConfig, shadow_draw=0.0):
    """Linear gain ``fading * 10**(-PL(d)/10)``; the alternate gain model."""
    pl = path_loss_db(distance, cfg, shadow_draw)
    out = np.asarray(fading, dtype=float) * 10.0 ** (-np.asarray(pl) / 10.0)
    return float(out) if out.ndim == 0 else out


def sample_fading(rng: np.random.Generator, size=None):
    """Rayleigh power fading: exponential draws with unit mean."""
    return rng.exponential(1.0, size)


def sample_shadowing(rng: np.random.Generator, cfg: PropagationConfig, size=None):
    if cfg.shadow_sigma_db == 0:
        return np.zeros(size) if size is not None else 0.0
    return rng.normal(0.0, cfg.shadow_sigma_db, size)


def sinr(device_i: int, cochannel: Mapping[int, Tuple[float, float]], noise: float) -> float:
    """SINR of one device inside its NOMA cluster.

    Args:
        device_i: id of the device of interest.
        cochannel: ``{device_id: (gain, power)}`` for every device on the
            sub-channel, including ``device_i``.
        noise: linear noise power.
    """
    if not noise > 0:
        raise ValueError("noise must be > 0")
    if device_i not in cochannel:
        raise ValueError(f"device {device_i} is not in the co-channel set")
    h_i, p_i = cochannel[device_i]
    interference = sum(h * p for j, (h, p) in cochannel.items() if j != device_i)
    return h_i * p_i / (interference + noise)


def cluster_sinr(gains, powers, assignment, n_subchannels: int, noise: float) -> np.ndarray:
    """Vectorised SINR for every device given a sub-channel assignment.

    Interference for device i is the received power of all other devices
    sharing i's sub-channel. No SIC ordering is applied.
    """
    received = np.asarray(gains, dtype=float) * np.asarray(powers, dtype=float)
    assignment = np.asarray(assignment)
    per_channel = np.bincount(assignment, weights=received, minlength=n_subchannels)
    interference = per_channel[assignment] - received
    # guard tiny negative residue from the subtraction
    np.maximum(interference, 0.0, out=interference)
    return received / (interference + noise)


def throughput_bps_hz(sinr_value):
    """Spectral efficiency ``log2(1 + sinr)`` in bits/s/Hz."""
    s = np.asarray(sinr_value, dtype=float)
    if np.any(s < 0):
        raise ValueError("sinr must be >= 0")
    out = np.log2(1.0 + s)
    return float(out) if out.ndim == 0 else out


def latency_seconds(data_bits, spectral_eff, subchannel_bandwidth):
    """Transmission delay of one data block; ``INFINITE_LATENCY`` at zero rate."""
    if not np.all(np.asarray(subchannel_bandwidth) > 0):
        raise ValueError("subchannel_bandwidth must be > 0")
    bits = np.asarray(data_bits, dtype=float)
    if np.any(bits <= 0):
        raise ValueError("data_bits must be > 0")
    rate = np.asarray(spectral_eff, dtype=float) * subchannel_bandwidth
    with np.errstate(divide="ignore"):
        out = np.where(rate > 0, bits / np.where(rate > 0, rate, 1.0), INFINITE_LATENCY)
    return float(out) if out.ndim == 0 else out
