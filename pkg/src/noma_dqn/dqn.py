"""Numpy deep Q-network: MLP, Bellman targets, MSE loss, optimizers, replay.

Weights are stored as ``(out, in)`` matrices so a layer computes
``x @ W.T + b`` on a batch of row vectors. Hidden layers use ReLU and the
output layer is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a gradient or parameter stops being finite."""


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 64
    learning_rate: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    target_sync_interval: int = 100
    memory_size: int = 2000
    hidden_sizes: Tuple[int, ...] = (128, 128)
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 < self.epsilon_min <= self.epsilon_start <= 1:
            raise ValueError("need 0 < epsilon_min <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.memory_size < 1:
            raise ValueError(f"memory_size must be >= 1, got {self.memory_size}")
        if self.batch_size > self.memory_size:
            raise ValueError(
                f"batch_size ({self.batch_size}) must be <= memory_size ({self.memory_size})")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.target_sync_interval < 1:
            raise ValueError("target_sync_interval must be >= 1")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes entries must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be > 0")


# ----------------------------------------------------------------------------
# network


@dataclass
class NetworkParameters:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {k}: bad shapes {w.shape} / {b.shape}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k} input does not match layer {k - 1} output")

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def arrays(self) -> List[np.ndarray]:
        """Parameters in canonical order ``W0, b0, W1, b1, ...`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "NetworkParameters":
        return NetworkParameters([w.copy() for w in self.weights],
                                 [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_params(layer_sizes: Sequence[int], rng: np.random.Generator) -> NetworkParameters:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParameters(weights, biases)


def _check_input(params: NetworkParameters, x: np.ndarray):
    if x.shape[-1] != params.weights[0].shape[1]:
        raise ValueError(
            f"state dimension {x.shape[-1]} != network input {params.weights[0].shape[1]}")


def forward(params: NetworkParameters, state) -> np.ndarray:
    """Q-values for one state (1-D) or a batch of states (2-D)."""
    x = np.asarray(state, dtype=float)
    _check_input(params, x)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w.T + b
        if k < last:
            x = np.maximum(x, 0.0)
    return x


def _forward_cache(params: NetworkParameters, x: np.ndarray):
    acts = [x]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(np.maximum(z, 0.0) if k < last else z)
    return acts


# ----------------------------------------------------------------------------
# transitions and targets


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Batch":
        return cls(
            np.stack([np.asarray(t.state, dtype=float) for t in transitions]),
            np.array([t.action for t in transitions], dtype=np.int64),
            np.array([t.reward for t in transitions], dtype=float),
            np.stack([np.asarray(t.next_state, dtype=float) for t in transitions]),
            np.array([t.done for t in transitions], dtype=bool),
        )

    @property
    def size(self) -> int:
        return len(self.actions)


def bellman_target(transition: Transition, target_params: NetworkParameters,
                   gamma: float) -> float:
    if transition.done:
        return float(transition.reward)
    q_next = forward(target_params, transition.next_state)
    return float(transition.reward + gamma * q_next.max())


def bellman_targets(batch: Batch, target_params: NetworkParameters, gamma: float) -> np.ndarray:
    """Batched ``bellman_target``; terminal rows ignore the next state."""
    q_next = forward(target_params, batch.next_states).max(axis=1)
    return batch.rewards + gamma * np.where(batch.dones, 0.0, q_next)


def loss_and_gradients(params: NetworkParameters, batch, targets):
    """Mean squared TD error on the taken actions and its parameter gradients.

    Targets are constants. Returns ``(loss, grads)`` with ``grads`` laid out like
    ``params.arrays()``.
    """
    if not isinstance(batch, Batch):
        batch = Batch.from_transitions(batch)
    y = np.asarray(targets, dtype=float)
    n = batch.size
    if y.shape != (n,):
        raise ValueError(f"expected {n} targets, got shape {y.shape}")
    _check_input(params, batch.states)
    acts = _forward_cache(params, batch.states)
    q = acts[-1]
    rows = np.arange(n)
    err = q[rows, batch.actions] - y
    loss = float(np.mean(err**2))

    delta = np.zeros_like(q)
    delta[rows, batch.actions] = 2.0 * err / n
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        grads_w[k] = delta.T @ acts[k]
        grads_b[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ params.weights[k]) * (acts[k] > 0)
    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads += [gw, gb]
    return loss, grads


# ----------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray]) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])

    def copy(self) -> "OptimizerState":
        return OptimizerState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t)


def optimizer_step(params, grads: Sequence[np.ndarray], opt_state: OptimizerState,
                   cfg: AgentConfig, lr: Optional[float] = None):
    """Apply one update in place and return ``(params, opt_state)``.

    ``params`` is a ``NetworkParameters`` or a list of arrays matching ``grads``.
    A non-finite gradient raises ``NonFiniteError`` before anything is touched.
    """
    arrays = params.arrays() if isinstance(params, NetworkParameters) else list(params)
    if len(arrays) != len(grads):
        raise ValueError("gradient list does not match parameters")
    for a, g in zip(arrays, grads):
        if a.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {a.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError("non-finite gradient; parameters left untouched")
    lr = cfg.learning_rate if lr is None else lr
    opt_state.t += 1
    if cfg.optimizer == "sgd":
        for a, g in zip(arrays, grads):
            a -= lr * g
    else:
        b1, b2, t = cfg.beta1, cfg.beta2, opt_state.t
        step = lr * math.sqrt(1.0 - b2**t) / (1.0 - b1**t)
        eps_hat = cfg.adam_eps * math.sqrt(1.0 - b2**t)
        for a, g, m, v in zip(arrays, grads, opt_state.m, opt_state.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            a -= step * m / (np.sqrt(v) + eps_hat)
    for a in arrays:
        if not np.isfinite(a).all():
            raise NonFiniteError("parameters became non-finite after update")
    return params, opt_state


# ----------------------------------------------------------------------------
# policy and target network


def select_action(params: NetworkParameters, state, epsilon: float,
                  rng: np.random.Generator, action_count: int) -> int:
    """Epsilon-greedy; greedy ties go to the lowest index."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(action_count))
    return int(np.argmax(forward(params, state)))


def sync_target(eval_params: NetworkParameters) -> NetworkParameters:
    return eval_params.copy()


def tabular_q_update(q_table: np.ndarray, s: int, a: int, r: float, s_next: int,
                     alpha: float, gamma: float, done: bool = False) -> np.ndarray:
    """One tabular Q-learning update; returns a new table."""
    q = np.array(q_table, dtype=float, copy=True)
    bootstrap = 0.0 if done else gamma * q[s_next].max()
    q[s, a] += alpha * (r + bootstrap - q[s, a])
    return q


# ----------------------------------------------------------------------------
# replay


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling.

    Storage is preallocated on the first insert once the state size is known.
    """

    def __init__(self, capacity: int = 2000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.cursor = 0
        self.size = 0
        self._states = None

    def __len__(self):
        return self.size

    def _allocate(self, dim: int):
        c = self.capacity
        self._states = np.zeros((c, dim))
        self._next_states = np.zeros((c, dim))
        self._actions = np.zeros(c, dtype=np.int64)
        self._rewards = np.zeros(c)
        self._dones = np.zeros(c, dtype=bool)

    def push(self, state, action: int, reward: float, next_state, done: bool):
        state = np.asarray(state, dtype=float)
        next_state = np.asarray(next_state, dtype=float)
        if self._states is None:
            self._allocate(state.shape[0])
        if state.shape != self._states.shape[1:] or next_state.shape != state.shape:
            raise ValueError("transition state dimension does not match the buffer")
        k = self.cursor
        self._states[k] = state
        self._actions[k] = action
        self._rewards[k] = reward
        self._next_states[k] = next_state
        self._dones[k] = done
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add(self, transition: Transition):
        self.push(*transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx],
                     self._next_states[idx], self._dones[idx])

    def transitions(self) -> List[Transition]:
        """Stored transitions, oldest first."""
        start = self.cursor if self.size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self.size)]
        return [Transition(self._states[k].copy(), int(self._actions[k]),
                           float(self._rewards[k]), self._next_states[k].copy(),
                           bool(self._dones[k])) for k in order]


# ----------------------------------------------------------------------------
# agent


class DQNAgent:
    """Evaluation/target network pair with replay and an epsilon schedule.

    ``learn()`` does nothing until the buffer holds ``batch_size``
    transitions; after that it performs one gradient step per call and copies
    the evaluation network into the target every ``target_sync_interval``
    gradient steps.
    """

    def __init__(self, state_dim: int, n_actions: int, cfg: AgentConfig,
                 rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.n_actions = n_actions
        self.rng = rng if rng is not None else np.random.default_rng()
        sizes = [state_dim, *cfg.hidden_sizes, n_actions]
        self.params = init_params(sizes, self.rng)
        self.target = sync_target(self.params)
        self.opt_state = OptimizerState.zeros_like(self.params.arrays())
        self.buffer = ReplayBuffer(cfg.memory_size)
        self.epsilon = cfg.epsilon_start
        self.gradient_steps = 0
        self.last_loss = float("nan")

    def act(self, state, epsilon: Optional[float] = None) -> int:
        eps = self.epsilon if epsilon is None else epsilon
        return select_action(self.params, state, eps, self.rng, self.n_actions)

    def remember(self, state, action, reward, next_state, done):
        self.buffer.push(state, action, reward, next_state, done)

    def learn(self) -> Optional[float]:
        if len(self.buffer) < self.cfg.batch_size:
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        y = bellman_targets(batch, self.target, self.cfg.gamma)
        loss, grads = loss_and_gradients(self.params, batch, y)
        optimizer_step(self.params, grads, self.opt_state, self.cfg)
        self.gradient_steps += 1
        if self.gradient_steps % self.cfg.target_sync_interval == 0:
            self.target = sync_target(self.params)
        self.last_loss = loss
        return loss

    def end_episode(self):
        self.epsilon = max(self.cfg.epsilon_min, self.epsilon * self.cfg.epsilon_decay)
