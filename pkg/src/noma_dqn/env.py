"""Smart-factory NOMA allocation environment.

One agent configures one device per timestep. Devices take turns in
round-robin order, and the one-hot block of the state vector tells the agent
whose turn it is. An action picks a (sub-channel, power level) pair for that
device. The reward is the device's spectral efficiency minus ``lam`` times its
transmission latency in milliseconds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import channel
from .channel import PropagationConfig

LATENCY_CAP_MS = 1000.0

TRACE_COLUMNS = (
    "episode", "step", "device_id", "dtype", "subchannel", "power",
    "sinr_db", "throughput_mbps", "latency_ms", "reward", "violation",
)


class DeviceType(enum.Enum):
    ROBOT = "robot"
    SENSOR = "sensor"
    CONTROLLER = "controller"

    @property
    def data_block_bits(self) -> int:
        return _DATA_BYTES[self] * 8

    @property
    def deadline_seconds(self) -> float:
        return _DEADLINE_S[self]


_DATA_BYTES = {DeviceType.ROBOT: 1500, DeviceType.SENSOR: 1024, DeviceType.CONTROLLER: 512}
_DEADLINE_S = {DeviceType.ROBOT: 0.100, DeviceType.SENSOR: 0.010, DeviceType.CONTROLLER: 0.100}

DEVICE_TYPES = (DeviceType.ROBOT, DeviceType.SENSOR, DeviceType.CONTROLLER)


@dataclass(frozen=True)
class Device:
    id: int
    dtype: DeviceType
    position: Tuple[float, float]


@dataclass(frozen=True)
class FactoryConfig:
    n_subchannels: int = 10
    n_robots: int = 5
    n_sensors: int = 10
    n_controllers: int = 10
    total_bandwidth_hz: float = 2e8
    factory_side_meters: float = 100.0
    power_levels: Tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    p_max: float = 1.0
    lam: float = 0.5
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def __post_init__(self):
        object.__setattr__(self, "power_levels", tuple(float(p) for p in self.power_levels))
        if self.n_subchannels < 1:
            raise ValueError(f"n_subchannels must be >= 1, got {self.n_subchannels}")
        for name in ("n_robots", "n_sensors", "n_controllers"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_devices < 1:
            raise ValueError("at least one device is required")
        if not self.power_levels:
            raise ValueError("power_levels must be non-empty")
        if list(self.power_levels) != sorted(self.power_levels):
            raise ValueError("power_levels must be in ascending order")
        if not all(0 < p <= self.p_max for p in self.power_levels):
            raise ValueError(f"every power level must lie in (0, p_max={self.p_max}]")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.total_bandwidth_hz > 0:
            raise ValueError("total_bandwidth_hz must be > 0")
        if not self.factory_side_meters > 0:
            raise ValueError("factory_side_meters must be > 0")

    @property
    def n_devices(self) -> int:
        return self.n_robots + self.n_sensors + self.n_controllers

    @property
    def subchannel_bandwidth_hz(self) -> float:
        return self.total_bandwidth_hz / self.n_subchannels

    def device_types(self) -> List[DeviceType]:
        return (
            [DeviceType.ROBOT] * self.n_robots
            + [DeviceType.SENSOR] * self.n_sensors
            + [DeviceType.CONTROLLER] * self.n_controllers
        )


@dataclass
class AllocationState:
    """Mutable core of the environment.

    Channel quantities are kept as per-device arrays; ``channels()`` gives the
    record view.
    """

    devices: List[Device]
    assigned_subchannel: np.ndarray
    power_level_index: np.ndarray
    current_device: int
    distance: np.ndarray
    fading: np.ndarray
    shadowing_db: np.ndarray
    gain: np.ndarray
    step_count: int = 0

    def channels(self) -> List[channel.ChannelRealization]:
        return [
            channel.ChannelRealization(i, float(self.distance[i]), float(self.fading[i]),
                                       float(self.gain[i]))
            for i in range(len(self.devices))
        ]

    def clusters(self, n_subchannels: int) -> List[List[int]]:
        return [np.flatnonzero(self.assigned_subchannel == j).tolist()
                for j in range(n_subchannels)]

    def copy(self) -> "AllocationState":
        return AllocationState(
            devices=list(self.devices),
            assigned_subchannel=self.assigned_subchannel.copy(),
            power_level_index=self.power_level_index.copy(),
            current_device=self.current_device,
            distance=self.distance.copy(),
            fading=self.fading.copy(),
            shadowing_db=self.shadowing_db.copy(),
            gain=self.gain.copy(),
            step_count=self.step_count,
        )


@dataclass
class StepOutcome:
    reward: float
    next_state: np.ndarray
    device_id: int
    per_device_sinr: np.ndarray
    per_device_throughput_mbps: np.ndarray
    per_device_latency_ms: np.ndarray
    deadline_violations: np.ndarray
    done: bool


def action_space_size(cfg: FactoryConfig) -> int:
    return cfg.n_subchannels * len(cfg.power_levels)


def encode_action(subchannel: int, level: int, cfg: FactoryConfig) -> int:
    return subchannel * len(cfg.power_levels) + level


def decode_action(action: int, cfg: FactoryConfig) -> Tuple[int, int]:
    return divmod(int(action), len(cfg.power_levels))


def state_dim(cfg: FactoryConfig) -> int:
    return 3 * cfg.n_devices


def encode_state(alloc: AllocationState, cfg: FactoryConfig) -> np.ndarray:
    """``[gain / max gain, power / p_max, one-hot(current device)]``."""
    n = len(alloc.devices)
    out = np.zeros(3 * n)
    g_max = alloc.gain.max()
    if g_max > 0:
        out[:n] = alloc.gain / g_max
    levels = np.asarray(cfg.power_levels)
    out[n:2 * n] = levels[alloc.power_level_index] / cfg.p_max
    out[2 * n + alloc.current_device] = 1.0
    return out


def reward_of(throughput_bps_hz: float, latency_ms: float, lam: float) -> float:
    """Spectral efficiency minus ``lam`` times latency, latency capped at 1000 ms."""
    return throughput_bps_hz - lam * min(latency_ms, LATENCY_CAP_MS)


def _gains(distance, fading, shadowing_db, prop: PropagationConfig) -> np.ndarray:
    if prop.gain_model == "log_distance":
        return channel.log_distance_gain(fading, distance, prop, shadowing_db)
    return channel.channel_gain(fading, distance, prop.path_loss_exponent)


class FactoryEnv:
    """Single-agent environment over a fixed factory configuration.

    Device positions are drawn at ``reset`` and stay fixed for the episode;
    small-scale fading is redrawn after every step.
    """

    def __init__(self, cfg: FactoryConfig, max_timesteps: int = 200,
                 rng: Optional[np.random.Generator] = None):
        if max_timesteps < 1:
            raise ValueError("max_timesteps must be >= 1")
        self.cfg = cfg
        self.max_timesteps = max_timesteps
        self.rng = rng if rng is not None else np.random.default_rng()
        self.alloc: Optional[AllocationState] = None
        self._types = cfg.device_types()
        self._bits = np.array([t.data_block_bits for t in self._types], dtype=float)
        self._budget_ms = np.array([t.deadline_seconds * 1e3 for t in self._types])
        self._levels = np.asarray(cfg.power_levels)

    @property
    def n_actions(self) -> int:
        return action_space_size(self.cfg)

    @property
    def state_dim(self) -> int:
        return state_dim(self.cfg)

    def reset(self) -> Tuple[AllocationState, np.ndarray]:
        cfg, rng = self.cfg, self.rng
        n = cfg.n_devices
        side = cfg.factory_side_meters
        xy = rng.uniform(0.0, side, size=(n, 2))
        devices = [Device(i, t, (float(xy[i, 0]), float(xy[i, 1])))
                   for i, t in enumerate(self._types)]
        bs = np.array([side / 2, side / 2])
        distance = np.hypot(xy[:, 0] - bs[0], xy[:, 1] - bs[1])
        # keep devices outside the reference distance so both gain models are defined
        distance = np.maximum(distance, cfg.propagation.reference_distance)
        shadowing = np.asarray(channel.sample_shadowing(rng, cfg.propagation, n), dtype=float)
        fading = channel.sample_fading(rng, n)
        self.alloc = AllocationState(
            devices=devices,
            assigned_subchannel=rng.integers(0, cfg.n_subchannels, size=n),
            power_level_index=np.zeros(n, dtype=np.int64),
            current_device=0,
            distance=distance,
            fading=fading,
            shadowing_db=shadowing,
            gain=_gains(distance, fading, shadowing, cfg.propagation),
        )
        return self.alloc, encode_state(self.alloc, cfg)

    def evaluate(self, alloc: Optional[AllocationState] = None):
        """Per-device (sinr, spectral efficiency, throughput Mbps, latency ms)."""
        a = alloc if alloc is not None else self.alloc
        cfg = self.cfg
        powers = self._levels[a.power_level_index]
        s = channel.cluster_sinr(a.gain, powers, a.assigned_subchannel, cfg.n_subchannels,
                                 cfg.propagation.noise_power)
        se = np.log2(1.0 + s)
        bw = cfg.subchannel_bandwidth_hz
        latency_ms = channel.latency_seconds(self._bits, se, bw) * 1e3
        return s, se, se * bw / 1e6, latency_ms

    def step(self, action: int) -> StepOutcome:
        a = self.alloc
        if a is None:
            raise RuntimeError("reset() must be called before step()")
        if a.step_count >= self.max_timesteps:
            raise RuntimeError("episode is over; call reset()")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        cfg = self.cfg
        i = a.current_device
        sub, level = decode_action(action, cfg)
        a.assigned_subchannel[i] = sub
        a.power_level_index[i] = level

        s, se, thr_mbps, lat_ms = self.evaluate(a)
        reward = reward_of(float(se[i]), float(lat_ms[i]), cfg.lam)
        violations = lat_ms > self._budget_ms

        a.current_device = (i + 1) % len(a.devices)
        a.fading = channel.sample_fading(self.rng, len(a.devices))
        a.gain = _gains(a.distance, a.fading, a.shadowing_db, cfg.propagation)
        a.step_count += 1
        return StepOutcome(
            reward=reward,
            next_state=encode_state(a, cfg),
            device_id=i,
            per_device_sinr=s,
            per_device_throughput_mbps=thr_mbps,
            per_device_latency_ms=lat_ms,
            deadline_violations=violations,
            done=a.step_count >= self.max_timesteps,
        )

    def trace_row(self, episode: int, step: int, outcome: StepOutcome) -> tuple:
        """One CSV trace row for the device acted on in ``outcome``."""
        i = outcome.device_id
        a = self.alloc
        s = outcome.per_device_sinr[i]
        sinr_db = 10.0 * np.log10(s) if s > 0 else -np.inf
        return (
            episode, step, i, self._types[i].value, int(a.assigned_subchannel[i]),
            float(self._levels[a.power_level_index[i]]), float(sinr_db),
            float(outcome.per_device_throughput_mbps[i]),
            float(outcome.per_device_latency_ms[i]), outcome.reward,
            bool(outcome.deadline_violations[i]),
        )
