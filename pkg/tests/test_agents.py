import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rl4rec import agents as A
from rl4rec import nn
from rl4rec.agents import (ActorCriticAgent, ActorCriticConfig, DQNAgent, DQNConfig,
                           EpsilonSchedule, ReplayMemory, Transition, TransitionBatch)
from rl4rec.encoders import EncoderConfig, State, StateBatch, encode, init_params
from rl4rec.errors import ConfigError, DimensionError, ExhaustionError, NumericError, ValidationError


def chain(items, feedback):
    """Transitions walking through one episode prefix."""
    out, s = [], State()
    for i, f in zip(items, feedback):
        nxt = s.append(i, f)
        out.append(Transition(s, i, float(f), nxt, len(nxt) == 10))
        s = nxt
    return out


# --- transitions and replay -------------------------------------------------------


def test_transition_invariants():
    s = State([1], [0])
    Transition(s, 2, 1.0, s.append(2, 1), False)
    with pytest.raises(ValidationError):
        Transition(s, 2, 1.0, s.append(3, 1), False)
    with pytest.raises(ValidationError):
        Transition(s, 2, 1.0, s.append(2, 1), True)
    full = State(range(9), [0] * 9)
    with pytest.raises(ValidationError):
        Transition(full, 20, 0.0, full.append(20, 0), False)


def test_replay_capacity_and_fifo_eviction():
    mem = ReplayMemory(6000)
    trs = chain(range(10), [1, 0] * 5)
    for k in range(6001):
        mem.push(trs[k % 10])
    assert len(mem) == 6000
    # the oldest surviving entry is push #1, not push #0
    assert mem[0] == trs[1]
    assert mem[5999] == trs[6000 % 10]


def test_replay_small_ring_order():
    mem = ReplayMemory(3)
    trs = chain([5, 6, 7, 8, 9], [1, 1, 0, 0, 1])
    for t in trs:
        mem.push(t)
    assert [mem[i] for i in range(3)] == trs[2:]
    with pytest.raises(IndexError):
        mem[3]


def test_replay_batch_roundtrips_states():
    mem = ReplayMemory(20)
    trs = chain(range(10), [1, 0, 1, 1, 0, 0, 1, 0, 1, 1])
    for t in trs:
        mem.push(t)
    tb = mem._batch(np.arange(10))
    ref = TransitionBatch.from_transitions(trs)
    for name in ("items", "feedback", "lengths"):
        assert np.array_equal(getattr(tb.prev, name), getattr(ref.prev, name))
        assert np.array_equal(getattr(tb.next, name), getattr(ref.next, name))
    assert np.array_equal(tb.terminal, ref.terminal)
    assert tb.terminal[-1] and not tb.terminal[:-1].any()


def test_replay_sample_without_replacement(rng):
    mem = ReplayMemory(50)
    trs = chain(range(10), [1] * 10)
    for k in range(50):
        mem.push(trs[k % 10])
    with pytest.raises(ValidationError):
        mem.sample(51, rng)
    # draw the whole memory: every slot exactly once
    slots = []
    orig = mem._batch
    mem._batch = lambda s: slots.append(np.sort(s)) or orig(s)
    mem.sample(50, rng)
    assert np.array_equal(slots[0], np.arange(50))


# --- epsilon ------------------------------------------------------------------------


@pytest.mark.parametrize("step,eps", [(0, 0.8), (19_999, 0.8), (20_000, 0.7), (40_000, 0.6),
                                      (139_999, 0.2), (140_000, 0.1), (10 ** 6, 0.1)])
def test_epsilon_values(step, eps):
    assert EpsilonSchedule()(step) == eps


@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 5))
def test_epsilon_closed_form_and_monotone(step, extra):
    sched = EpsilonSchedule()
    assert sched(step) == pytest.approx(max(0.8 - 0.1 * (step // 20_000), 0.1), abs=1e-12)
    assert sched(step + extra) <= sched(step)


# --- action selection -----------------------------------------------------------


def test_greedy_argmax():
    assert A.select_action(np.array([0.0, 5.0, 1.0]), State(), 0.0, np.random.default_rng(0)) == 1


def test_greedy_skips_items_in_state():
    assert A.select_action(np.array([0.0, 5.0, 1.0]), State([1], [1]), 0.0, np.random.default_rng(0)) == 2


def test_ties_broken_uniformly():
    rng = np.random.default_rng(0)
    q = np.array([5.0, 5.0, 1.0])
    picks = np.array([A.select_action(q, State(), 0.0, rng) for _ in range(10_000)])
    assert set(picks.tolist()) <= {0, 1}
    assert abs((picks == 0).mean() - 0.5) < 0.02


def test_full_exploration_is_uniform_over_legal_items():
    rng = np.random.default_rng(1)
    q = np.arange(6.0)
    s = State([0, 5], [1, 0])
    picks = np.array([A.select_action(q, s, 1.0, rng) for _ in range(8_000)])
    counts = np.bincount(picks, minlength=6)
    assert counts[0] == counts[5] == 0
    # 4 legal items, each 1/4; 4 binomial sigmas
    assert np.all(np.abs(counts[1:5] / 8000 - 0.25) < 4 * np.sqrt(0.25 * 0.75 / 8000))


@given(st.lists(st.integers(0, 11), min_size=0, max_size=10, unique=True),
       st.floats(0, 1), st.integers(0, 10 ** 6))
def test_never_selects_an_item_already_in_state(items, eps, seed):
    s = State(items, [0] * len(items))
    q = np.random.default_rng(seed).normal(size=12)
    a = A.select_action(q, s, eps, np.random.default_rng(seed))
    assert a not in items and 0 <= a < 12


def test_exhaustion_when_all_items_used():
    with pytest.raises(ExhaustionError):
        A.select_action(np.zeros(3), State([0, 1, 2], [0, 0, 0]), 0.0, np.random.default_rng(0))


def test_bad_epsilon():
    with pytest.raises(ValidationError):
        A.select_action(np.zeros(3), State(), 1.5, np.random.default_rng(0))


# --- DQN --------------------------------------------------------------------------


def _avg(n_items=6, d=3, seed=0, out_dim=None):
    cfg = EncoderConfig("Avg", n_items, d, d, out_dim=out_dim)
    return cfg, init_params(cfg, np.random.default_rng(seed))


def test_td_target_terminal_ignores_target_net():
    cfg, p = _avg(n_items=12)
    full = State(range(9), [0] * 9)
    tr = Transition(full, 11, 1.0, full.append(11, 1), True)
    p["b"].data[:] = 100.0
    y = A.td_targets(TransitionBatch.from_transitions([tr]), p, cfg, 0.9)
    assert y.tolist() == [1.0]


def test_td_target_masked_max():
    cfg, p = _avg(n_items=4)
    p["W"].data[:] = 0.0
    p["b"].data[:] = [7.0, 2.0, 1.0, -1.0]  # item 0 is in the next state, so it is masked
    tr = Transition(State(), 0, 1.0, State([0], [1]), False)
    y = A.td_targets(TransitionBatch.from_transitions([tr]), p, cfg, 0.9)
    assert y[0] == pytest.approx(1.0 + 0.9 * 2.0)


def test_dqn_step_zero_error_leaves_params_unchanged():
    cfg, p = _avg()
    p["W"].data[:] = 0.0
    p["b"].data[:] = 0.0
    target = p.copy()
    trs = chain([1, 2], [0, 0])
    before = p.checksum()
    loss = A.dqn_learn_step(trs, p, target, DQNConfig(gamma=0.0), cfg, nn.AdamState(lr=0.01))
    assert loss == 0.0
    assert p.checksum() == before


def test_dqn_gamma_zero_regresses_onto_rewards():
    # two-item toy: from the empty state, item 0 pays 1 and item 1 pays 0
    cfg, p = _avg(n_items=2, d=2)
    target = p.copy()
    trs = [Transition(State(), 0, 1.0, State([0], [1]), False),
           Transition(State(), 1, 0.0, State([1], [0]), False)]
    dq = DQNConfig(gamma=0.0)
    adam = nn.AdamState(lr=0.05)
    for _ in range(400):
        A.dqn_learn_step(trs, p, target, dq, cfg, adam)
    q = encode(State(), p, cfg).data
    assert q == pytest.approx([1.0, 0.0], abs=1e-3)


def test_dqn_non_finite_loss_raises():
    cfg, p = _avg()
    p["b"].data[0] = np.nan
    with pytest.raises(NumericError):
        A.dqn_learn_step(chain([0], [1]), p, p.copy(), DQNConfig(), cfg, nn.AdamState(lr=1e-3))


def test_dqn_empty_batch():
    cfg, p = _avg()
    with pytest.raises(ValidationError):
        A.dqn_learn_step([], p, p.copy(), DQNConfig(), cfg, nn.AdamState(lr=1e-3))


def test_target_sync_exact_copy_and_isolation():
    cfg, p = _avg()
    t = init_params(cfg, np.random.default_rng(9))
    A.target_sync(p, t)
    assert all(np.array_equal(p[k].data, t[k].data) for k in p)
    p["W"].data += 1.0
    assert not np.array_equal(p["W"].data, t["W"].data)
    with pytest.raises(DimensionError):
        A.target_sync(p, _avg(n_items=7)[1])


def test_target_sync_every_twenty_learn_steps():
    cfg = EncoderConfig("Avg", 12, 3, 3)
    agent = DQNAgent(cfg, DQNConfig(minibatch=4), seed=0)
    for t in chain(range(10), [1, 0] * 5):
        agent.observe(t)
    syncs = []
    for k in range(1, 61):
        agent.learn()
        if agent.target.checksum() == agent.behavior.checksum():
            syncs.append(k)
    assert syncs == [20, 40, 60]


def test_soft_replace_examples():
    src = nn.ParameterSet({"w": np.full(3, 2.0)})
    dst = nn.ParameterSet({"w": np.zeros(3)})
    A.soft_replace(src, dst, 0.5)
    assert dst["w"].data.tolist() == [1.0, 1.0, 1.0]
    A.soft_replace(src, dst, 1.0)
    assert np.array_equal(dst["w"].data, src["w"].data)
    with pytest.raises(ValidationError):
        A.soft_replace(src, dst, 0.0)


@given(st.floats(0.01, 0.99), st.integers(1, 30))
def test_soft_replace_geometric_convergence(tau, k):
    src = nn.ParameterSet({"w": np.array([3.0, -1.0])})
    dst = nn.ParameterSet({"w": np.array([0.0, 5.0])})
    gap0 = np.abs(dst["w"].data - src["w"].data)
    for _ in range(k):
        A.soft_replace(src, dst, tau)
    assert np.allclose(np.abs(dst["w"].data - src["w"].data), (1 - tau) ** k * gap0)


def test_config_validation():
    with pytest.raises(ConfigError):
        DQNConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        DQNConfig(minibatch=0)
    with pytest.raises(ConfigError):
        ActorCriticConfig(tau=0.0)
    with pytest.raises(ConfigError):
        ReplayMemory(0)


def test_dqn_agent_act_respects_state():
    cfg = EncoderConfig("GRU", 12, 4, 4)
    agent = DQNAgent(cfg, DQNConfig(), seed=3)
    states = [State([0, 1, 2], [1, 0, 1]), State()]
    for step in (0, 200_000):
        for _ in range(20):
            a = agent.act([0, 1], states, step)
            assert a[0] not in (0, 1, 2)


# --- actor-critic ------------------------------------------------------------------


def _ac_setup(n_items=8, d=3, kind="Avg", seed=0):
    rng = np.random.default_rng(seed)
    ccfg = EncoderConfig(kind, n_items, d, d)
    acfg = EncoderConfig(kind, n_items, d, d, out_dim=d)
    actor, critic = init_params(acfg, rng), init_params(ccfg, rng)
    return acfg, ccfg, actor, critic, actor.copy(), critic.copy()


def test_policy_is_distribution_over_legal_items():
    acfg, _, actor, *_ = _ac_setup()
    s = State([1, 4], [1, 0])
    p = np.exp(A.policy_log_probs([s], actor, acfg).data[0])
    assert p[1] == p[4] == 0.0
    assert p.sum() == pytest.approx(1.0)


def test_zero_critic_value_leaves_actor_unchanged():
    acfg, ccfg, actor, critic, at, ct = _ac_setup()
    critic["W"].data[:] = 0.0
    critic["b"].data[:] = 0.0
    before = actor.checksum()
    A.ac_learn_step(chain([2], [1]), actor, critic, at, ct, ActorCriticConfig(), acfg, ccfg,
                    np.random.default_rng(0))
    assert actor.checksum() == before


def test_positive_critic_value_raises_log_prob_of_action():
    acfg, ccfg, actor, critic, at, ct = _ac_setup()
    critic["W"].data[:] = 0.0
    critic["b"].data[:] = 1.0
    tr = chain([2], [1])[0]
    lp = lambda: A.policy_log_probs([tr.prev_state], actor, acfg).data[0, 2]
    before = lp()
    A.ac_learn_step(tr, actor, critic, at, ct, ActorCriticConfig(lr_actor=1e-3), acfg, ccfg,
                    np.random.default_rng(0))
    assert lp() > before


def test_terminal_critic_target_is_reward():
    acfg, ccfg, actor, critic, at, ct = _ac_setup(n_items=12)
    full = State(range(9), [0] * 9)
    tr = Transition(full, 11, 1.0, full.append(11, 1), True)
    ct["b"].data[:] = 50.0
    y = A.critic_td_error(TransitionBatch.from_transitions([tr]), critic, ct, at, ccfg, acfg, 0.9,
                          np.random.default_rng(0))
    assert y.tolist() == [1.0]


def test_critic_target_uses_target_actor_sample():
    acfg, ccfg, actor, critic, at, ct = _ac_setup(n_items=3)
    ct["W"].data[:] = 0.0
    ct["b"].data[:] = [4.0, 4.0, 4.0]
    tr = Transition(State(), 0, 0.0, State([0], [0]), False)
    y = A.critic_td_error(TransitionBatch.from_transitions([tr]), critic, ct, at, ccfg, acfg, 0.5,
                          np.random.default_rng(0))
    assert y.tolist() == [2.0]


def test_ac_step_soft_replaces_targets():
    acfg, ccfg, actor, critic, at, ct = _ac_setup()
    at0 = at["W"].data.copy()
    A.ac_learn_step(chain([1, 2], [1, 1]), actor, critic, at, ct, ActorCriticConfig(tau=0.5),
                    acfg, ccfg, np.random.default_rng(0))
    assert np.allclose(at["W"].data, 0.5 * at0 + 0.5 * actor["W"].data)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ac_non_finite_raises():
    acfg, ccfg, actor, critic, at, ct = _ac_setup()
    critic["b"].data[:] = np.inf
    with pytest.raises(NumericError):
        A.ac_learn_step(chain([1], [1]), actor, critic, at, ct, ActorCriticConfig(), acfg, ccfg,
                        np.random.default_rng(0))


def test_ac_agent_runs_and_acts_legally():
    agent = ActorCriticAgent(EncoderConfig("Attention", 12, 4, 4), ActorCriticConfig(minibatch=4), seed=0)
    for t in chain(range(10), [1, 0] * 5):
        agent.observe(t)
    for _ in range(3):
        assert np.isfinite(agent.learn())
    s = State([3, 4], [1, 1])
    for _ in range(30):
        assert agent.act([0], [s], 0)[0] not in (3, 4)
