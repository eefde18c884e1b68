import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_dqn import dqn
from noma_dqn.dqn import (
    AgentConfig, Batch, NetworkParameters, NonFiniteError, OptimizerState, ReplayBuffer,
    Transition, bellman_target, bellman_targets, forward, init_params, loss_and_gradients,
    optimizer_step, select_action, sync_target, tabular_q_update,
)
from noma_dqn.toy import tabular_sweeps, two_state_chain


def scalar_forward(params, x):
    """Loop-based forward pass, independent of the vectorised one."""
    act = list(x)
    n_layers = len(params.weights)
    for k in range(n_layers):
        w, b = params.weights[k], params.biases[k]
        out = []
        for i in range(w.shape[0]):
            z = b[i] + sum(w[i, j] * act[j] for j in range(w.shape[1]))
            out.append(max(z, 0.0) if k < n_layers - 1 else z)
        act = out
    return act


def random_batch(rng, dim, n_actions, size):
    return Batch(rng.normal(size=(size, dim)), rng.integers(0, n_actions, size),
                 rng.normal(size=size), rng.normal(size=(size, dim)), rng.random(size) < 0.3)


def finite_difference(params, batch, targets, h=1e-5):
    grads = []
    for a in params.arrays():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up = loss_and_gradients(params, batch, targets)[0]
            a[idx] = old - h
            down = loss_and_gradients(params, batch, targets)[0]
            a[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


# --- forward -----------------------------------------------------------------


def test_forward_zero_params():
    p = NetworkParameters([np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
    assert (forward(p, np.array([1.0, -2.0, 3.0])) == 0).all()


def test_forward_hand_computed_chain():
    p = NetworkParameters([np.array([[2.0]]), np.array([[-3.0]])],
                          [np.array([0.5]), np.array([1.0])])
    # relu(2*1.5 + 0.5) = 3.5 -> -3*3.5 + 1 = -9.5
    assert forward(p, np.array([1.5]))[0] == -9.5
    # relu(2*-1 + 0.5) = 0 -> 1
    assert forward(p, np.array([-1.0]))[0] == 1.0


def test_forward_matches_scalar_loop():
    rng = np.random.default_rng(0)
    p = init_params([5, 7, 6, 3], rng)
    for b in p.biases:
        b[:] = rng.normal(size=b.shape)
    x = rng.normal(size=5)
    np.testing.assert_allclose(forward(p, x), scalar_forward(p, x), rtol=1e-12, atol=1e-14)


def test_forward_output_scaling():
    rng = np.random.default_rng(1)
    p = init_params([6, 8, 4], rng)
    x = rng.normal(size=6)
    scaled = p.copy()
    scaled.weights[-1] *= 3.0
    np.testing.assert_allclose(forward(scaled, x), 3.0 * forward(p, x), rtol=1e-12)


def test_forward_batch_equals_rows():
    rng = np.random.default_rng(2)
    p = init_params([4, 8, 8, 5], rng)
    xs = rng.normal(size=(10, 4))
    batch = forward(p, xs)
    for i in range(10):
        np.testing.assert_allclose(batch[i], forward(p, xs[i]), rtol=1e-12)


def test_forward_dimension_mismatch():
    p = init_params([4, 3, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(p, np.zeros(5))


def test_init_shapes_and_glorot_bounds():
    p = init_params([75, 128, 128, 40], np.random.default_rng(0))
    assert [w.shape for w in p.weights] == [(128, 75), (128, 128), (40, 128)]
    assert p.layer_sizes == [75, 128, 128, 40]
    assert all((b == 0).all() for b in p.biases)
    assert np.abs(p.weights[0]).max() <= math.sqrt(6 / (75 + 128))


def test_init_deterministic():
    a = init_params([5, 8, 3], np.random.default_rng(9))
    b = init_params([5, 8, 3], np.random.default_rng(9))
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))


def test_bad_shapes_rejected():
    with pytest.raises(ValueError):
        NetworkParameters([np.zeros((3, 2)), np.zeros((2, 4))], [np.zeros(3), np.zeros(2)])


# --- targets -----------------------------------------------------------------


def test_bellman_terminal():
    p = init_params([3, 4, 2], np.random.default_rng(0))
    t = Transition(np.zeros(3), 0, 1.0, np.ones(3), True)
    assert bellman_target(t, p, 0.99) == 1.0


def test_bellman_known_max():
    p = NetworkParameters([np.zeros((2, 1))], [np.array([2.0, -1.0])])
    t = Transition(np.zeros(1), 0, 1.0, np.zeros(1), False)
    assert bellman_target(t, p, 0.99) == pytest.approx(2.98, rel=1e-12)


def test_bellman_matches_enumerated_max():
    rng = np.random.default_rng(3)
    p = init_params([4, 6, 5], rng)
    for b in p.biases:
        b[:] = rng.normal(size=b.shape)
    for _ in range(100):
        t = Transition(rng.normal(size=4), int(rng.integers(5)), float(rng.normal()),
                       rng.normal(size=4), bool(rng.random() < 0.2))
        q = scalar_forward(p, t.next_state)
        best = q[0]
        for a in range(1, 5):
            if q[a] > best:
                best = q[a]
        expected = t.reward if t.done else t.reward + 0.9 * best
        assert bellman_target(t, p, 0.9) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_bellman_batched_agrees_and_ignores_terminal_next_state():
    rng = np.random.default_rng(4)
    p = init_params([4, 6, 5], rng)
    batch = random_batch(rng, 4, 5, 20)
    ys = bellman_targets(batch, p, 0.95)
    for i in range(20):
        t = Transition(batch.states[i], batch.actions[i], batch.rewards[i],
                       batch.next_states[i], batch.dones[i])
        assert ys[i] == pytest.approx(bellman_target(t, p, 0.95), rel=1e-12, abs=1e-14)
    moved = batch._replace(next_states=batch.next_states + 100.0)
    np.testing.assert_array_equal(bellman_targets(moved, p, 0.95)[batch.dones],
                                  ys[batch.dones])


# --- loss and gradients -------------------------------------------------------


def test_loss_zero_at_perfect_fit():
    rng = np.random.default_rng(5)
    p = init_params([3, 5, 4], rng)
    batch = random_batch(rng, 3, 4, 8)
    y = forward(p, batch.states)[np.arange(8), batch.actions]
    loss, grads = loss_and_gradients(p, batch, y)
    assert loss == 0.0
    assert all((g == 0).all() for g in grads)


def test_loss_mean_semantics():
    rng = np.random.default_rng(6)
    p = init_params([3, 5, 4], rng)
    batch = random_batch(rng, 3, 4, 8)
    y = rng.normal(size=8)
    doubled = Batch(*(np.concatenate([f, f]) for f in batch))
    assert loss_and_gradients(p, doubled, np.concatenate([y, y]))[0] == pytest.approx(
        loss_and_gradients(p, batch, y)[0], rel=1e-12)


def test_loss_accepts_transition_list():
    rng = np.random.default_rng(7)
    p = init_params([3, 5, 4], rng)
    batch = random_batch(rng, 3, 4, 4)
    ts = [Transition(batch.states[i], int(batch.actions[i]), batch.rewards[i],
                     batch.next_states[i], bool(batch.dones[i])) for i in range(4)]
    y = rng.normal(size=4)
    assert loss_and_gradients(p, ts, y)[0] == loss_and_gradients(p, batch, y)[0]


def test_loss_target_count_mismatch():
    rng = np.random.default_rng(7)
    p = init_params([3, 5, 4], rng)
    with pytest.raises(ValueError):
        loss_and_gradients(p, random_batch(rng, 3, 4, 4), np.zeros(3))


def test_gradient_single_sample_tiny_network():
    rng = np.random.default_rng(8)
    p = init_params([2, 2, 2], rng)
    p.biases[0][:] = [0.3, -0.2]
    batch = random_batch(rng, 2, 2, 1)
    y = np.array([0.7])
    _, grads = loss_and_gradients(p, batch, y)
    assert max_relative_error(grads, finite_difference(p, batch, y)) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_check_random_networks(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 4))
    sizes = [int(s) for s in rng.integers(1, 9, depth + 1)]
    p = init_params(sizes, rng)
    for b in p.biases:
        b[:] = rng.normal(scale=0.5, size=b.shape)
    batch = random_batch(rng, sizes[0], sizes[-1], int(rng.integers(1, 6)))
    y = rng.normal(size=batch.size)
    _, grads = loss_and_gradients(p, batch, y)
    assert max_relative_error(grads, finite_difference(p, batch, y)) < 1e-4


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p = init_params([3, 4, 2], rng)
    batch = random_batch(rng, 3, 2, 5)
    assert loss_and_gradients(p, batch, rng.normal(size=5))[0] >= 0


# --- optimizer ----------------------------------------------------------------


def test_zero_gradient_leaves_params():
    p = init_params([3, 4, 2], np.random.default_rng(0))
    before = p.copy()
    state = OptimizerState.zeros_like(p.arrays())
    optimizer_step(p, [np.zeros_like(a) for a in p.arrays()], state, AgentConfig())
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), before.arrays()))
    assert state.t == 1


def test_adam_quadratic():
    cfg = AgentConfig(learning_rate=0.1)
    w = [np.array([1.0])]
    state = OptimizerState.zeros_like(w)
    for _ in range(200):
        optimizer_step(w, [2.0 * w[0]], state, cfg)
    assert abs(w[0][0]) < 0.05


def test_adam_matches_textbook_iteration():
    cfg = AgentConfig(learning_rate=0.01)
    w = [np.array([0.8, -1.3])]
    state = OptimizerState.zeros_like(w)
    ref = [0.8, -1.3]
    m = [0.0, 0.0]
    v = [0.0, 0.0]
    for t in range(1, 51):
        g = [3.0 * x * x - 1.0 for x in ref]
        for k in range(2):
            m[k] = 0.9 * m[k] + 0.1 * g[k]
            v[k] = 0.999 * v[k] + 0.001 * g[k] ** 2
            m_hat = m[k] / (1 - 0.9**t)
            v_hat = v[k] / (1 - 0.999**t)
            ref[k] -= 0.01 * m_hat / (math.sqrt(v_hat) + 1e-8)
        optimizer_step(w, [3.0 * w[0] ** 2 - 1.0], state, cfg)
    np.testing.assert_allclose(w[0], ref, rtol=1e-9)
    assert state.t == 50


def test_sgd_option():
    cfg = AgentConfig(learning_rate=0.1, optimizer="sgd")
    w = [np.array([1.0])]
    optimizer_step(w, [np.array([2.0])], OptimizerState.zeros_like(w), cfg)
    assert w[0][0] == pytest.approx(0.8)


def test_nonfinite_gradient_leaves_params():
    p = init_params([3, 4, 2], np.random.default_rng(0))
    before = p.copy()
    grads = [np.ones_like(a) for a in p.arrays()]
    grads[-1][0] = np.nan
    state = OptimizerState.zeros_like(p.arrays())
    with pytest.raises(NonFiniteError):
        optimizer_step(p, grads, state, AgentConfig())
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), before.arrays()))
    assert state.t == 0


def test_optimizer_deterministic():
    def run():
        rng = np.random.default_rng(21)
        p = init_params([4, 8, 3], rng)
        state = OptimizerState.zeros_like(p.arrays())
        for _ in range(20):
            batch = random_batch(rng, 4, 3, 8)
            _, g = loss_and_gradients(p, batch, rng.normal(size=8))
            optimizer_step(p, g, state, AgentConfig())
        return p
    a, b = run(), run()
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.arrays(), b.arrays()))


# --- policy -------------------------------------------------------------------


def const_q(values):
    values = np.asarray(values, dtype=float)
    return NetworkParameters([np.zeros((len(values), 1))], [values])


def test_select_argmax():
    assert select_action(const_q([1, 3, 2]), [0.0], 0.0, np.random.default_rng(0), 3) == 1


def test_select_tie_lowest_index():
    q = [0, 1, 5, 2, 3, 5, 0]
    assert select_action(const_q(q), [0.0], 0.0, np.random.default_rng(0), 7) == 2


def test_select_uniform_when_epsilon_one():
    rng = np.random.default_rng(13)
    q = const_q(np.arange(40))
    counts = np.bincount([select_action(q, [0.0], 1.0, rng, 40) for _ in range(10**5)],
                         minlength=40)
    freq = counts / 10**5
    assert np.all(np.abs(freq - 0.025) <= 0.003)


def test_select_greedy_pure_function():
    p = init_params([3, 6, 4], np.random.default_rng(0))
    s = np.array([0.1, -0.4, 2.0])
    picks = {select_action(p, s, 0.0, np.random.default_rng(k), 4) for k in range(20)}
    assert len(picks) == 1


def test_select_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        select_action(const_q([1.0]), [0.0], 1.5, np.random.default_rng(0), 1)


def test_sync_target_copy_semantics():
    rng = np.random.default_rng(14)
    p = init_params([3, 6, 4], rng)
    target = sync_target(p)
    probes = rng.normal(size=(10, 3))
    np.testing.assert_array_equal(forward(p, probes), forward(target, probes))
    frozen = forward(target, probes)
    batch = random_batch(rng, 3, 4, 8)
    _, g = loss_and_gradients(p, batch, rng.normal(size=8))
    optimizer_step(p, g, OptimizerState.zeros_like(p.arrays()), AgentConfig())
    np.testing.assert_array_equal(forward(target, probes), frozen)
    assert not np.array_equal(forward(p, probes), frozen)
    t1, t2 = sync_target(p), sync_target(p)
    assert all(np.array_equal(a, b) for a, b in zip(t1.arrays(), t2.arrays()))


# --- tabular oracle -------------------------------------------------------------


def test_tabular_single_update():
    q = tabular_q_update(np.zeros((2, 2)), 0, 1, 1.0, 1, 0.5, 0.99)
    assert q[0, 1] == 0.5
    assert q.sum() == 0.5


def test_tabular_alpha_zero():
    q0 = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(tabular_q_update(q0, 0, 0, 5.0, 1, 0.0, 0.9), q0)


def test_tabular_does_not_mutate_input():
    q0 = np.zeros((2, 2))
    tabular_q_update(q0, 0, 0, 1.0, 1, 1.0, 0.9)
    assert (q0 == 0).all()


def test_tabular_converges_to_dynamic_programming():
    mdp = two_state_chain(gamma=0.9)
    exact = mdp.value_iteration()
    q = tabular_sweeps(mdp, alpha=1.0, sweeps=400)
    np.testing.assert_allclose(q, exact, atol=1e-9, rtol=0)


# --- replay ---------------------------------------------------------------------


def push_n(buf, n, dim=3, start=0):
    for k in range(start, start + n):
        buf.push(np.full(dim, k), k % 4, float(k), np.full(dim, k + 1), False)


def test_replay_capacity_and_fifo():
    buf = ReplayBuffer(capacity=10)
    push_n(buf, 13)
    assert len(buf) == 10
    rewards = [t.reward for t in buf.transitions()]
    assert rewards == [float(k) for k in range(3, 13)]


def test_replay_sample_shapes_and_membership():
    buf = ReplayBuffer(capacity=50)
    push_n(buf, 20)
    batch = buf.sample(64, np.random.default_rng(0))
    assert batch.states.shape == (64, 3) and batch.actions.shape == (64,)
    assert set(batch.rewards.tolist()) <= set(float(k) for k in range(20))
    np.testing.assert_array_equal(batch.states[:, 0], batch.rewards)


def test_replay_sampling_roughly_uniform():
    buf = ReplayBuffer(capacity=10)
    push_n(buf, 10)
    batch = buf.sample(50_000, np.random.default_rng(1))
    freq = np.bincount(batch.rewards.astype(int), minlength=10) / 50_000
    assert np.all(np.abs(freq - 0.1) < 0.01)


def test_replay_rejects_dim_change_and_empty_sample():
    buf = ReplayBuffer(capacity=5)
    with pytest.raises(ValueError):
        buf.sample(1, np.random.default_rng(0))
    push_n(buf, 1)
    with pytest.raises(ValueError):
        buf.push(np.zeros(4), 0, 0.0, np.zeros(4), False)


@settings(max_examples=50, deadline=None)
@given(capacity=st.integers(1, 30), n=st.integers(0, 100))
def test_replay_never_exceeds_capacity(capacity, n):
    buf = ReplayBuffer(capacity)
    push_n(buf, n)
    assert len(buf) == min(n, capacity)
    kept = [t.reward for t in buf.transitions()]
    assert kept == [float(k) for k in range(max(0, n - capacity), n)]


# --- config and agent -------------------------------------------------------------


@pytest.mark.parametrize("kw", [
    {"gamma": 1.0}, {"gamma": -0.1}, {"batch_size": 3000}, {"epsilon_min": 0.0},
    {"epsilon_start": 1.5}, {"optimizer": "rmsprop"},
])
def test_agent_config_rejects(kw):
    with pytest.raises(ValueError):
        AgentConfig(**kw)


def test_agent_warmup_and_sync():
    cfg = AgentConfig(batch_size=4, memory_size=20, target_sync_interval=3, hidden_sizes=(8,))
    agent = dqn.DQNAgent(3, 2, cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    losses = []
    for k in range(10):
        agent.remember(rng.normal(size=3), k % 2, 1.0, rng.normal(size=3), False)
        losses.append(agent.learn())
    assert losses[:3] == [None] * 3
    assert all(l is not None for l in losses[3:])
    assert agent.gradient_steps == 7
    # last sync at gradient step 6; one update since
    assert not np.array_equal(agent.target.weights[0], agent.params.weights[0])


def test_epsilon_schedule():
    agent = dqn.DQNAgent(2, 2, AgentConfig(epsilon_decay=0.5, epsilon_min=0.1),
                         np.random.default_rng(0))
    seen = []
    for _ in range(5):
        agent.end_episode()
        seen.append(agent.epsilon)
    assert seen == [0.5, 0.25, 0.125, 0.1, 0.1]
