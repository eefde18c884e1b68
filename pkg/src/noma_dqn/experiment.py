"""Training runs, learning-rate and lambda sweeps, and seed aggregation."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dqn import AgentConfig, DQNAgent, NonFiniteError
from .env import DEVICE_TYPES, LATENCY_CAP_MS, TRACE_COLUMNS, FactoryConfig, FactoryEnv

log = logging.getLogger(__name__)

RUN_COLUMNS = TRACE_COLUMNS + ("cumulative_reward", "epsilon")

SUMMARY_COLUMNS = (
    "param", "value", "device_type", "n_runs",
    "throughput_mbps_median", "throughput_mbps_q25", "throughput_mbps_q75",
    "latency_ms_median", "latency_ms_q25", "latency_ms_q75",
    "violation_rate_median", "violation_rate_q25", "violation_rate_q75",
    "final_reward_median", "final_reward_q25", "final_reward_q75",
    "final_reward_var_median",
)

_DTYPE_CODES = {t.value: k for k, t in enumerate(DEVICE_TYPES)}


@dataclass(frozen=True)
class ExperimentPlan:
    episodes: int = 1000
    max_timesteps: int = 200
    seeds: Tuple[int, ...] = (0, 1, 2)
    lr_values: Tuple[float, ...] = (1e-2, 5e-3, 1e-3)
    lambda_values: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    eval_episodes: int = 20

    def __post_init__(self):
        for name in ("seeds", "lr_values", "lambda_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.episodes < 1:
            raise ValueError(f"episodes must be > 0, got {self.episodes}")
        if self.max_timesteps < 1:
            raise ValueError(f"max_timesteps must be > 0, got {self.max_timesteps}")
        if self.eval_episodes < 0:
            raise ValueError(f"eval_episodes must be >= 0, got {self.eval_episodes}")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative integers")
        if any(not lr > 0 for lr in self.lr_values):
            raise ValueError("lr_values must be > 0")
        if any(not lam >= 0 for lam in self.lambda_values):
            raise ValueError("lambda_values must be >= 0")


@dataclass
class TypeMetrics:
    throughput_mbps: float
    latency_ms: float
    violation_rate: float


@dataclass
class RunRecord:
    tag: str
    seed: int
    learning_rate: float
    lam: float
    episodes: int
    max_timesteps: int
    trace: Dict[str, np.ndarray]
    episode_mean_reward: np.ndarray
    eval_metrics: Dict[str, TypeMetrics]
    eval_spectral_efficiency: float
    total_steps: int
    gradient_steps: int
    duration_s: float = 0.0

    @property
    def step_rewards(self) -> np.ndarray:
        return self.trace["reward"]

    @property
    def cumulative_rewards(self) -> np.ndarray:
        return self.trace["cumulative_reward"]

    def final_quarter(self) -> Tuple[float, float]:
        """Mean and variance of the per-step reward over the last quarter of training."""
        r = self.step_rewards
        tail = r[int(0.75 * len(r)):]
        return float(tail.mean()), float(tail.var())


@dataclass(frozen=True)
class RunSpec:
    factory: FactoryConfig
    agent: AgentConfig
    seed: int
    episodes: int
    max_timesteps: int
    eval_episodes: int
    tag: str


def _streams(seed: int):
    env_ss, agent_ss, eval_ss = np.random.SeedSequence(int(seed)).spawn(3)
    return (np.random.default_rng(env_ss), np.random.default_rng(agent_ss),
            np.random.default_rng(eval_ss))


def greedy_evaluate(agent: DQNAgent, factory: FactoryConfig, episodes: int,
                    max_timesteps: int, rng: np.random.Generator):
    """Roll out the frozen greedy policy; aggregate per device type.

    Every device's metrics are collected at every step. Latency is capped at
    ``LATENCY_CAP_MS`` before averaging so zero-rate outliers stay finite.
    """
    env = FactoryEnv(factory, max_timesteps, rng)
    types = np.array([t.value for t in factory.device_types()])
    n = factory.n_devices
    total = episodes * max_timesteps
    thr = np.zeros((total, n))
    lat = np.zeros((total, n))
    viol = np.zeros((total, n), dtype=bool)
    se = np.zeros((total, n))
    row = 0
    for _ in range(episodes):
        _, state = env.reset()
        done = False
        while not done:
            action = agent.act(state, epsilon=0.0)
            out = env.step(action)
            thr[row] = out.per_device_throughput_mbps
            lat[row] = np.minimum(out.per_device_latency_ms, LATENCY_CAP_MS)
            viol[row] = out.deadline_violations
            se[row] = out.per_device_throughput_mbps * 1e6 / factory.subchannel_bandwidth_hz
            row += 1
            state, done = out.next_state, out.done
    metrics = {}
    for t in DEVICE_TYPES:
        cols = types == t.value
        if not cols.any() or total == 0:
            continue
        metrics[t.value] = TypeMetrics(float(thr[:, cols].mean()), float(lat[:, cols].mean()),
                                       float(viol[:, cols].mean()))
    return metrics, (float(se.mean()) if total else float("nan"))


def train(spec: RunSpec, return_agent: bool = False):
    """One training run followed by greedy evaluation.

    Per step: epsilon-greedy action, environment step, replay insert, and one
    gradient step once the buffer holds a full batch. Epsilon decays once
    per episode.
    """
    t0 = time.perf_counter()
    env_rng, agent_rng, eval_rng = _streams(spec.seed)
    env = FactoryEnv(spec.factory, spec.max_timesteps, env_rng)
    agent = DQNAgent(env.state_dim, env.n_actions, spec.agent, agent_rng)

    total = spec.episodes * spec.max_timesteps
    trace = {
        "episode": np.zeros(total, dtype=np.int64),
        "step": np.zeros(total, dtype=np.int64),
        "device_id": np.zeros(total, dtype=np.int64),
        "dtype": np.zeros(total, dtype=np.int64),
        "subchannel": np.zeros(total, dtype=np.int64),
        "power": np.zeros(total),
        "sinr_db": np.zeros(total),
        "throughput_mbps": np.zeros(total),
        "latency_ms": np.zeros(total),
        "reward": np.zeros(total),
        "violation": np.zeros(total, dtype=bool),
        "cumulative_reward": np.zeros(total),
        "epsilon": np.zeros(total),
    }
    episode_mean = np.zeros(spec.episodes)
    k = 0
    for ep in range(spec.episodes):
        _, state = env.reset()
        cumulative = 0.0
        for t in range(spec.max_timesteps):
            action = agent.act(state)
            out = env.step(action)
            # time-limit truncation is not an absorbing state; keep bootstrapping
            agent.remember(state, action, out.reward, out.next_state, False)
            try:
                agent.learn()
            except NonFiniteError as exc:
                raise NonFiniteError(
                    f"run {spec.tag} (seed {spec.seed}) diverged at episode {ep} step {t}: {exc}"
                ) from exc
            cumulative += out.reward
            row = env.trace_row(ep, t, out)
            for name, value in zip(TRACE_COLUMNS, row):
                if name == "dtype":
                    value = _DTYPE_CODES[value]
                trace[name][k] = value
            trace["cumulative_reward"][k] = cumulative
            trace["epsilon"][k] = agent.epsilon
            k += 1
            state = out.next_state
        episode_mean[ep] = cumulative / spec.max_timesteps
        agent.end_episode()
        if (ep + 1) % max(1, spec.episodes // 10) == 0:
            log.info("%s: episode %d/%d mean reward %.4f eps %.3f", spec.tag, ep + 1,
                     spec.episodes, episode_mean[ep], agent.epsilon)

    metrics, se = greedy_evaluate(agent, spec.factory, spec.eval_episodes,
                                  spec.max_timesteps, eval_rng)
    record = RunRecord(
        tag=spec.tag, seed=spec.seed, learning_rate=spec.agent.learning_rate,
        lam=spec.factory.lam, episodes=spec.episodes, max_timesteps=spec.max_timesteps,
        trace=trace, episode_mean_reward=episode_mean, eval_metrics=metrics,
        eval_spectral_efficiency=se, total_steps=k, gradient_steps=agent.gradient_steps,
        duration_s=time.perf_counter() - t0,
    )
    return (record, agent) if return_agent else record


def _train_with_agent(spec: RunSpec):
    return train(spec, return_agent=True)


def run_all(specs: Sequence[RunSpec], jobs: int = 1):
    """Train every spec, in parallel processes when ``jobs > 1``. Order is preserved."""
    if jobs <= 1 or len(specs) <= 1:
        return [_train_with_agent(s) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_with_agent, specs))


def _fmt(value) -> str:
    return f"{value:g}"


def lr_specs(factory: FactoryConfig, agent: AgentConfig, plan: ExperimentPlan) -> List[RunSpec]:
    return [
        RunSpec(factory, dataclasses.replace(agent, learning_rate=lr), seed, plan.episodes,
                plan.max_timesteps, plan.eval_episodes, f"lr{_fmt(lr)}_seed{seed}")
        for lr in plan.lr_values for seed in plan.seeds
    ]


def lambda_specs(factory: FactoryConfig, agent: AgentConfig,
                 plan: ExperimentPlan) -> List[RunSpec]:
    return [
        RunSpec(dataclasses.replace(factory, lam=lam), agent, seed, plan.episodes,
                plan.max_timesteps, plan.eval_episodes, f"lambda{_fmt(lam)}_seed{seed}")
        for lam in plan.lambda_values for seed in plan.seeds
    ]


def sweep_learning_rates(factory: FactoryConfig, agent: AgentConfig, plan: ExperimentPlan,
                         jobs: int = 1) -> Dict[float, List[RunRecord]]:
    results = run_all(lr_specs(factory, agent, plan), jobs)
    out: Dict[float, List[RunRecord]] = {lr: [] for lr in plan.lr_values}
    for rec, _ in results:
        out[rec.learning_rate].append(rec)
    return out


def sweep_lambda(factory: FactoryConfig, agent: AgentConfig, plan: ExperimentPlan,
                 jobs: int = 1) -> Dict[float, List[RunRecord]]:
    """One run per (lambda, seed) at ``agent.learning_rate``."""
    results = run_all(lambda_specs(factory, agent, plan), jobs)
    out: Dict[float, List[RunRecord]] = {lam: [] for lam in plan.lambda_values}
    for rec, _ in results:
        out[rec.lam].append(rec)
    return out


def _stats(values) -> Tuple[float, float, float]:
    v = np.asarray(values, dtype=float)
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return float(med), float(q25), float(q75)


def aggregate(records: Iterable[RunRecord], param: str = "lam") -> List[dict]:
    """Median and interquartile range across runs, grouped by ``param``.

    ``param`` is a ``RunRecord`` attribute such as ``"lam"`` or
    ``"learning_rate"``. Rows are sorted by value, then device type.
    """
    records = list(records)
    if not records:
        raise ValueError("aggregate() needs at least one record")
    groups: Dict[float, List[RunRecord]] = {}
    for r in records:
        groups.setdefault(getattr(r, param), []).append(r)
    rows = []
    for value in sorted(groups):
        group = sorted(groups[value], key=lambda r: (r.seed, r.tag))
        finals = [r.final_quarter() for r in group]
        reward = _stats([f[0] for f in finals])
        reward_var = _stats([f[1] for f in finals])[0]
        for t in DEVICE_TYPES:
            ms = [r.eval_metrics[t.value] for r in group if t.value in r.eval_metrics]
            if not ms:
                continue
            thr = _stats([m.throughput_mbps for m in ms])
            lat = _stats([m.latency_ms for m in ms])
            vio = _stats([m.violation_rate for m in ms])
            rows.append({
                "param": param, "value": value, "device_type": t.value, "n_runs": len(ms),
                "throughput_mbps_median": thr[0], "throughput_mbps_q25": thr[1],
                "throughput_mbps_q75": thr[2],
                "latency_ms_median": lat[0], "latency_ms_q25": lat[1], "latency_ms_q75": lat[2],
                "violation_rate_median": vio[0], "violation_rate_q25": vio[1],
                "violation_rate_q75": vio[2],
                "final_reward_median": reward[0], "final_reward_q25": reward[1],
                "final_reward_q75": reward[2], "final_reward_var_median": reward_var,
            })
    return rows


# ----------------------------------------------------------------------------
# CSV output; every float is written with 6 decimals


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def write_run_csv(record: RunRecord, path) -> None:
    tr = record.trace
    names = [t.value for t in DEVICE_TYPES]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for k in range(record.total_steps):
            row = []
            for col in RUN_COLUMNS:
                v = tr[col][k]
                row.append(names[v] if col == "dtype" else _cell(v))
            w.writerow(row)


def write_summary_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_cell(r[c]) if c != "value" else f"{float(r[c]):.6f}"
                        for c in SUMMARY_COLUMNS])


def record_summary(record: RunRecord) -> dict:
    """JSON-friendly digest of one run."""
    mean, var = record.final_quarter()
    return {
        "tag": record.tag,
        "seed": record.seed,
        "learning_rate": record.learning_rate,
        "lambda": record.lam,
        "episodes": record.episodes,
        "max_timesteps": record.max_timesteps,
        "total_steps": record.total_steps,
        "gradient_steps": record.gradient_steps,
        "final_quarter_reward_mean": mean,
        "final_quarter_reward_var": var,
        "eval_spectral_efficiency": record.eval_spectral_efficiency,
        "eval": {k: dataclasses.asdict(v) for k, v in record.eval_metrics.items()},
        "duration_s": record.duration_s,
    }
