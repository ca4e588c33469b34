from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import one_hot_dataset, perfect_dnn
from sensebeam.dqn import (
    Batch,
    DqnAgent,
    DqnConfig,
    ReplayBuffer,
    epsilon_greedy,
    greedy_action,
    greedy_policy,
    push_transition,
    q_update,
    qnet_init,
    target_sync,
    td_targets,
    train_dqn,
)
from sensebeam.env import EnvConfig, SensingEnv
from sensebeam.lyapunov import SensingBudget
from sensebeam.nn import AdamState, MLPParams, forward, mlp_init


def const_qnet(q0: float, q1: float, d: int = 3) -> MLPParams:
    return MLPParams([np.zeros((2, d))], [np.array([q0, q1])])


def random_batch(n, d, seed, terminal=False):
    rng = np.random.default_rng(seed)
    return Batch(rng.normal(size=(n, d)), rng.integers(0, 2, size=n), rng.uniform(0, 5, size=n),
                 rng.normal(size=(n, d)), np.full(n, terminal) if isinstance(terminal, bool) else terminal)


def test_default_hyperparameters():
    cfg = DqnConfig()
    assert (cfg.hidden, cfg.gamma, cfg.lr, cfg.batch_size) == ((128, 128), 0.99999, 0.001, 64)
    assert (cfg.replay_capacity, cfg.target_sync) == (50_000, 1000)
    assert cfg.total_steps == 120_000


def test_epsilon_schedule():
    cfg = DqnConfig(epochs=10, steps_per_epoch=100)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(250) == pytest.approx(0.525)
    assert cfg.epsilon(500) == 0.05
    assert cfg.epsilon(999) == 0.05


@pytest.mark.parametrize("kw", [dict(gamma=1.0), dict(lr=0.0), dict(loss="l1"), dict(objective="x"),
                                dict(batch_size=0), dict(eps_end=1.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DqnConfig(**kw)


def test_qnet_init():
    online, target = qnet_init(5, DqnConfig(seed=3))
    assert online.layer_sizes == [5, 128, 128, 2]
    assert online.equals(target)
    assert online.weights[0] is not target.weights[0]
    assert online.equals(qnet_init(5, DqnConfig(seed=3))[0])


def test_greedy_is_argmin():
    assert greedy_action(const_qnet(3.0, 1.0), np.zeros(3)) == 1
    assert greedy_action(const_qnet(0.1, 0.9), np.zeros(3)) == 0
    assert greedy_action(const_qnet(2.0, 2.0), np.zeros(3)) == 0
    assert greedy_action(const_qnet(3.0, 1.0), np.zeros(3), objective="reward") == 0


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(1e-3, 1e3))
def test_greedy_invariant_to_positive_scale(q0, q1, c):
    assert greedy_action(const_qnet(q0, q1), np.zeros(3)) == greedy_action(const_qnet(c * q0, c * q1), np.zeros(3))


def test_epsilon_zero_is_greedy():
    rng = np.random.default_rng(0)
    assert all(epsilon_greedy(const_qnet(3.0, 1.0), np.zeros(3), 0.0, rng) == 1 for _ in range(100))


def test_epsilon_one_is_uniform():
    rng = np.random.default_rng(0)
    freq = np.mean([epsilon_greedy(const_qnet(0.0, 9.0), np.zeros(3), 1.0, rng) for _ in range(10_000)])
    assert abs(freq - 0.5) <= 0.02


def test_epsilon_out_of_range():
    with pytest.raises(ValueError):
        epsilon_greedy(const_qnet(0, 0), np.zeros(3), 1.5, np.random.default_rng(0))


def test_replay_ring_semantics():
    buf = ReplayBuffer(3, 1)
    for i in range(5):
        push_transition(buf, ([i], i % 2, float(i), [i + 1]))
    assert len(buf) == 3
    np.testing.assert_array_equal(buf.contents().C, [2.0, 3.0, 4.0])
    np.testing.assert_array_equal(buf.contents().S[:, 0], [2, 3, 4])


def test_replay_rejects_bad_transitions():
    buf = ReplayBuffer(3, 1)
    with pytest.raises(ValueError):
        buf.push([0], 2, 0.0, [0])
    with pytest.raises(ValueError):
        buf.push([0], 1, float("nan"), [0])
    with pytest.raises(ValueError):
        buf.sample(1, np.random.default_rng(0))


def test_replay_sampling_reproducible():
    def draws():
        buf = ReplayBuffer(50, 2)
        for i in range(30):
            buf.push([i, -i], i % 2, float(i), [i, i])
        rng = np.random.default_rng(9)
        return np.concatenate([buf.sample(8, rng).C for _ in range(5)])

    np.testing.assert_array_equal(draws(), draws())


@given(st.integers(1, 20), st.integers(0, 60))
@settings(max_examples=30)
def test_replay_arrays_roundtrip(capacity, n):
    buf = ReplayBuffer(capacity, 2)
    for i in range(n):
        buf.push([i, 0.5 * i], i % 2, float(i), [i + 1, 0.0], i % 3 == 0)
    back = ReplayBuffer.from_arrays(buf.to_arrays())
    assert (back.size, back.cursor) == (buf.size, buf.cursor)
    for a, b in [(back.S, buf.S), (back.x, buf.x), (back.C, buf.C), (back.terminal, buf.terminal)]:
        np.testing.assert_array_equal(a[:buf.size], b[:buf.size])


def test_td_target_terminal_gamma_zero():
    b = Batch(np.zeros((1, 3)), np.array([1]), np.array([4.2]), np.ones((1, 3)), np.array([True]))
    assert td_targets(const_qnet(7.0, 8.0), b, 0.0)[0] == 4.2
    assert td_targets(const_qnet(7.0, 8.0), b, 0.9)[0] == 4.2


def test_td_targets_match_scalar_loop():
    target = mlp_init([4, 8, 2], 2)
    b = random_batch(32, 4, 0, terminal=np.arange(32) % 5 == 0)
    y = td_targets(target, b, 0.97)
    for i in range(32):
        q = forward(target, b.S2[i])
        expect = b.C[i] + (0.0 if b.terminal[i] else 0.97 * min(q[0], q[1]))
        assert abs(y[i] - expect) <= 1e-12 * max(1.0, abs(expect))
    y_r = td_targets(target, b, 0.97, objective="reward")
    for i in range(32):
        q = forward(target, b.S2[i])
        expect = -b.C[i] + (0.0 if b.terminal[i] else 0.97 * max(q[0], q[1]))
        assert abs(y_r[i] - expect) <= 1e-12 * max(1.0, abs(expect))


def test_q_update_fixed_point_leaves_params():
    online = mlp_init([3, 8, 2], 0)
    b = random_batch(16, 3, 1, terminal=True)
    b.C = forward(online, b.S)[np.arange(16), b.x]  # targets already equal predictions
    before = online.copy()
    adam = AdamState.for_params(online)
    _, loss = q_update(online, online.copy(), b, 0.0, 0.01, adam)
    assert loss == 0.0
    assert online.equals(before)


def test_q_update_only_taken_action_head_moves():
    online = mlp_init([3, 8, 2], 0)
    b = random_batch(16, 3, 2)
    b.x[:] = 0
    row, bias = online.weights[-1][1].copy(), online.biases[-1][1]
    q_update(online, online.copy(), b, 0.9, 0.01, AdamState.for_params(online))
    np.testing.assert_array_equal(online.weights[-1][1], row)
    assert online.biases[-1][1] == bias


def test_q_update_reduces_td_error():
    # frozen target: plain regression, so repeated steps must fit the batch
    online = mlp_init([3, 64, 2], 0)
    target = online.copy()
    b = random_batch(64, 3, 3)
    adam = AdamState.for_params(online)
    losses = [q_update(online, target, b, 0.5, 0.01, adam)[1] for _ in range(500)]
    assert losses[-1] < 0.05 * losses[0]


def test_huber_matches_squared_for_small_errors():
    online = mlp_init([3, 8, 2], 0)
    b = random_batch(16, 3, 4, terminal=True)
    b.C = forward(online, b.S)[np.arange(16), b.x] + 0.3
    a1, a2 = online.copy(), online.copy()
    q_update(a1, online, b, 0.0, 0.01, AdamState.for_params(a1), loss="squared")
    q_update(a2, online, b, 0.0, 0.01, AdamState.for_params(a2), loss="huber")
    for u, v in zip(a1.arrays(), a2.arrays()):
        np.testing.assert_allclose(u, v, atol=1e-12)


def test_target_sync_examples():
    online, target = mlp_init([2, 2], 0), mlp_init([2, 2], 1)
    assert target_sync(online, target, 999, 1000) is target
    synced = target_sync(online, target, 1000, 1000)
    assert synced.equals(online) and synced is not online
    assert target_sync(online, target, 1000, 0) is target


def toy_env(T=600):
    labels = np.arange(T) % 4
    cfg = EnvConfig(budget=SensingBudget.from_alpha(0.5), V=1.0, horizon=40)
    return SensingEnv(one_hot_dataset(labels, 4), perfect_dnn(4, scale=2.0), cfg)


SMALL = DqnConfig(hidden=(16, 16), epochs=6, steps_per_epoch=40, batch_size=16, replay_capacity=500,
                  target_sync=50, gamma=0.9)


def test_train_counts_steps_and_epochs():
    agent, hist = train_dqn(toy_env(), SMALL)
    assert agent.step == SMALL.total_steps
    assert [h.epoch for h in hist] == list(range(SMALL.epochs))
    assert len(agent.buffer) == SMALL.total_steps


def test_training_is_deterministic():
    a, h1 = train_dqn(toy_env(), SMALL)
    b, h2 = train_dqn(toy_env(), SMALL)
    assert a.online.equals(b.online)
    assert h1 == h2


class Interrupt(Exception):
    pass


def test_resume_is_bit_identical():
    full, _ = train_dqn(toy_env(), SMALL)
    env = toy_env()
    agent = DqnAgent(env.state_dim, SMALL)

    def stop(agent, stats):
        if stats.epoch == 2:
            raise Interrupt

    with pytest.raises(Interrupt):
        train_dqn(env, SMALL, agent, on_epoch=stop)
    assert agent.epoch == 3
    resumed, _ = train_dqn(env, SMALL, agent=agent)
    assert resumed.online.equals(full.online)
    assert resumed.target.equals(full.target)


def test_greedy_policy_is_frozen_and_deterministic():
    agent, _ = train_dqn(toy_env(), SMALL)
    pi = greedy_policy(agent)
    S = np.random.default_rng(0).uniform(size=(20, agent.state_dim))
    first = [pi(s) for s in S]
    agent.online.weights[-1][:] = 0.0
    assert [pi(s) for s in S] == first


def mirrored(params: MLPParams) -> MLPParams:
    out = params.copy()
    out.weights[-1] *= -1
    out.biases[-1] *= -1
    return out


def test_cost_and_reward_formulations_mirror():
    """Negating the output layer maps the cost learner exactly onto the reward learner."""
    cfg_c = replace(SMALL, objective="cost")
    cfg_r = replace(SMALL, objective="reward")
    env_c, env_r = toy_env(), toy_env()
    agent_c = DqnAgent(env_c.state_dim, cfg_c)
    agent_r = DqnAgent(env_r.state_dim, cfg_r)
    agent_r.online, agent_r.target = mirrored(agent_c.online), mirrored(agent_c.target)
    agent_c, hc = train_dqn(env_c, cfg_c, agent_c)
    agent_r, hr = train_dqn(env_r, cfg_r, agent_r)
    assert hc == hr
    S = np.random.default_rng(1).uniform(size=(50, env_c.state_dim))
    assert [agent_c.greedy(s) for s in S] == [agent_r.greedy(s) for s in S]
    np.testing.assert_array_equal(forward(agent_c.online, S), -forward(agent_r.online, S))


class TwoStateMdp:
    """Tiny MDP with one-hot states; stands in for SensingEnv inside train_dqn."""

    def __init__(self, costs, P, horizon=50, seed=0):
        self.costs, self.P = np.asarray(costs, float), np.asarray(P, float)
        self.horizon = horizon
        self.rng = np.random.default_rng(seed)
        self.state_dim = 2
        self.s, self.n, self.done = 0, 0, True

    def reset(self):
        self.s, self.n, self.done = int(self.rng.integers(2)), 0, False

    def encoded(self):
        return np.eye(2)[self.s]

    def step(self, x):
        c = self.costs[self.s, x]
        self.s = int(self.rng.random() < self.P[self.s, x])
        self.n += 1
        self.done = self.n >= self.horizon
        return None, c, SimpleNamespace(Q=0.0)


def value_iteration(costs, P, gamma, iters=2000):
    Q = np.zeros((2, 2))
    for _ in range(iters):
        V = Q.min(axis=1)
        Q = costs + gamma * ((1 - P) * V[0] + P * V[1])
    return Q


@pytest.mark.parametrize("gamma", [0.0, 0.5])
def test_toy_mdp_matches_tabular_oracle(gamma):
    # P[s, a] = probability of moving to state 1
    costs = np.array([[1.0, 0.2], [0.0, 0.8]])
    P = np.array([[0.2, 0.9], [0.1, 0.7]])
    Qstar = value_iteration(costs, P, gamma)
    cfg = DqnConfig(hidden=(16,), gamma=gamma, lr=0.01, epochs=40, steps_per_epoch=50, batch_size=32,
                    replay_capacity=2000, target_sync=100, seed=1)
    agent, _ = train_dqn(TwoStateMdp(costs, P), cfg)
    for s in range(2):
        assert agent.greedy(np.eye(2)[s]) == int(np.argmin(Qstar[s]))
        np.testing.assert_allclose(agent.q_values(np.eye(2)[s]), Qstar[s], atol=0.15)
