"""Small deterministic MDPs for checking the learning stack against tabular values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dqn import AgentConfig, DQNAgent, tabular_q_update


@dataclass(frozen=True)
class DeterministicMDP:
    next_state: np.ndarray  # (S, A) int
    reward: np.ndarray  # (S, A)
    gamma: float

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]

    def one_hot(self, s: int) -> np.ndarray:
        v = np.zeros(self.n_states)
        v[s] = 1.0
        return v

    def value_iteration(self, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
        q = np.zeros(self.next_state.shape)
        for _ in range(max_iter):
            new = self.reward + self.gamma * q.max(axis=1)[self.next_state]
            if np.abs(new - q).max() < tol:
                return new
            q = new
        return q


def four_state_chain(gamma: float = 0.9) -> DeterministicMDP:
    """Line of 4 states; action 0 moves right, action 1 moves left.

    Staying at the right end via "right" pays 1.0 and staying at the left end
    via "left" pays 0.8. The optimal greedy policy is (left, right, right,
    right).
    """
    nxt = np.array([[1, 0], [2, 0], [3, 1], [3, 2]])
    rew = np.zeros((4, 2))
    rew[3, 0] = 1.0
    rew[0, 1] = 0.8
    return DeterministicMDP(nxt, rew, gamma)


def two_state_chain(gamma: float = 0.99) -> DeterministicMDP:
    nxt = np.array([[1, 0], [0, 1]])
    rew = np.array([[0.0, 0.5], [1.0, 0.2]])
    return DeterministicMDP(nxt, rew, gamma)


def tabular_sweeps(mdp: DeterministicMDP, alpha: float, sweeps: int) -> np.ndarray:
    q = np.zeros(mdp.next_state.shape)
    for _ in range(sweeps):
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                q = tabular_q_update(q, s, a, mdp.reward[s, a], mdp.next_state[s, a],
                                     alpha, mdp.gamma)
    return q


def train_dqn(mdp: DeterministicMDP, episodes: int = 300, horizon: int = 20, seed: int = 0,
              cfg: AgentConfig = None) -> DQNAgent:
    """Epsilon-greedy DQN on ``mdp`` with random start states and one-hot observations."""
    cfg = cfg or AgentConfig(gamma=mdp.gamma, batch_size=32, learning_rate=3e-3,
                             epsilon_decay=0.98, epsilon_min=0.05, target_sync_interval=50,
                             memory_size=2000, hidden_sizes=(32, 32))
    rng = np.random.default_rng(seed)
    agent = DQNAgent(mdp.n_states, mdp.n_actions, cfg, rng)
    for _ in range(episodes):
        s = int(rng.integers(mdp.n_states))
        for _ in range(horizon):
            a = agent.act(mdp.one_hot(s))
            s2 = int(mdp.next_state[s, a])
            agent.remember(mdp.one_hot(s), a, mdp.reward[s, a], mdp.one_hot(s2), False)
            agent.learn()
            s = s2
        agent.end_episode()
    return agent


def greedy_policy(agent: DQNAgent, mdp: DeterministicMDP) -> np.ndarray:
    return np.array([agent.act(mdp.one_hot(s), epsilon=0.0) for s in range(mdp.n_states)])
