"""DQN and actor-critic agents over the state encoders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .encoders import (EncoderConfig, EncoderParams, State, StateBatch, T_MAX,
                       encode, init_params)
from .errors import ConfigError, DimensionError, ExhaustionError, NumericError, ValidationError
from .nn import AdamState, ParameterSet


@dataclass(frozen=True)
class Transition:
    prev_state: State
    action: int
    reward: float
    next_state: State
    terminal: bool

    def __post_init__(self):
        expected = self.prev_state.items + (self.action,)
        if self.next_state.items != expected or self.next_state.feedback[:-1] != self.prev_state.feedback:
            raise ValidationError("next_state must be prev_state with (action, feedback) appended")
        if self.terminal != (len(self.next_state) == T_MAX):
            raise ValidationError(f"terminal must be set exactly when the next state has {T_MAX} items")


@dataclass
class TransitionBatch:
    prev: StateBatch
    next: StateBatch
    actions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.actions)

    @classmethod
    def from_transitions(cls, ts: Sequence[Transition]) -> "TransitionBatch":
        return cls(
            StateBatch.from_states([t.prev_state for t in ts]),
            StateBatch.from_states([t.next_state for t in ts]),
            np.array([t.action for t in ts], dtype=np.int64),
            np.array([t.reward for t in ts], dtype=np.float64),
            np.array([t.terminal for t in ts], dtype=bool),
        )


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of transitions, stored column-wise."""

    def __init__(self, capacity: int = 6000, t_max: int = T_MAX):
        if capacity <= 0:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self.t_max = t_max
        self._items = np.zeros((capacity, t_max), dtype=np.int64)
        self._fb = np.zeros((capacity, t_max), dtype=np.int64)
        self._len = np.zeros(capacity, dtype=np.int64)
        self._action = np.zeros(capacity, dtype=np.int64)
        self._new_fb = np.zeros(capacity, dtype=np.int64)
        self._reward = np.zeros(capacity, dtype=np.float64)
        self._terminal = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition):
        k = self.cursor
        t = len(tr.prev_state)
        self._items[k] = 0
        self._fb[k] = 0
        self._items[k, :t] = tr.prev_state.items
        self._fb[k, :t] = tr.prev_state.feedback
        self._len[k] = t
        self._action[k] = tr.action
        self._new_fb[k] = tr.next_state.feedback[-1]
        self._reward[k] = tr.reward
        self._terminal[k] = tr.terminal
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _slot(self, i: int) -> int:
        # i = 0 is the oldest stored transition
        if not 0 <= i < self.size:
            raise IndexError(i)
        start = self.cursor if self.size == self.capacity else 0
        return (start + i) % self.capacity

    def __getitem__(self, i: int) -> Transition:
        k = self._slot(i)
        t = self._len[k]
        prev = State(self._items[k, :t], self._fb[k, :t])
        nxt = prev.append(int(self._action[k]), int(self._new_fb[k]))
        return Transition(prev, int(self._action[k]), float(self._reward[k]), nxt, bool(self._terminal[k]))

    def _batch(self, slots: np.ndarray) -> TransitionBatch:
        items, fb, lens = self._items[slots], self._fb[slots], self._len[slots]
        actions = self._action[slots]
        prev = StateBatch(items, fb, lens)
        n_items, n_fb = items.copy(), fb.copy()
        rows = np.arange(len(slots))
        ok = lens < self.t_max
        n_items[rows[ok], lens[ok]] = actions[ok]
        n_fb[rows[ok], lens[ok]] = self._new_fb[slots][ok]
        nxt = StateBatch(n_items, n_fb, np.minimum(lens + 1, self.t_max))
        return TransitionBatch(prev, nxt, actions, self._reward[slots].copy(), self._terminal[slots].copy())

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform minibatch, without replacement inside the batch."""
        if batch_size > self.size:
            raise ValidationError(f"cannot sample {batch_size} from {self.size} transitions")
        slots = rng.choice(self.size, size=batch_size, replace=False)
        return self._batch(slots)


@dataclass(frozen=True)
class EpsilonSchedule:
    initial: float = 0.8
    floor: float = 0.1
    decrement: float = 0.1
    decay_frequency: int = 20_000

    def __call__(self, step: int) -> float:
        # round away the float residue of 0.8 - k*0.1
        return max(round(self.initial - self.decrement * (step // self.decay_frequency), 12), self.floor)


@dataclass
class DQNConfig:
    gamma: float = 0.9
    minibatch: int = 128
    target_sync_every: int = 20
    memory_size: int = 6000
    lr: float = 1e-3
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if min(self.minibatch, self.target_sync_every, self.memory_size) <= 0 or self.lr <= 0:
            raise ConfigError("DQN sizes and learning rate must be positive")


@dataclass
class ActorCriticConfig:
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    tau: float = 0.01
    gamma: float = 0.9
    minibatch: int = 128
    memory_size: int = 6000

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")


# ---------------------------------------------------------------------------
# action selection


def _legal_mask(batch: StateBatch, n_items: int) -> np.ndarray:
    legal = np.ones((len(batch), n_items), dtype=bool)
    rows = np.repeat(np.arange(len(batch)), batch.lengths)
    legal[rows, batch.items[batch.mask]] = False
    return legal


def _greedy_row(q: np.ndarray, legal: np.ndarray, rng: np.random.Generator) -> int:
    masked = np.where(legal, q, -np.inf)
    best = masked.max()
    ties = np.flatnonzero(masked == best)
    return int(ties[0]) if len(ties) == 1 else int(rng.choice(ties))


def select_actions(q_values: np.ndarray, states, epsilon: float,
                   rng: np.random.Generator) -> np.ndarray:
    """ε-greedy over items not yet in each state; ties broken uniformly at random."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError(f"epsilon must lie in [0, 1], got {epsilon}")
    batch = states if isinstance(states, StateBatch) else StateBatch.from_states(states)
    q_values = np.atleast_2d(q_values)
    legal = _legal_mask(batch, q_values.shape[1])
    out = np.empty(len(batch), dtype=np.int64)
    for k in range(len(batch)):
        options = np.flatnonzero(legal[k])
        if len(options) == 0:
            raise ExhaustionError("every item is already in the state")
        if epsilon > 0 and rng.random() < epsilon:
            out[k] = rng.choice(options)
        else:
            out[k] = _greedy_row(q_values[k], legal[k], rng)
    return out


def select_action(q_values, state: State, epsilon: float, rng: np.random.Generator) -> int:
    q = q_values.data if isinstance(q_values, nn.Tensor) else np.asarray(q_values, dtype=np.float64)
    return int(select_actions(q[None, :], [state], epsilon, rng)[0])


# ---------------------------------------------------------------------------
# DQN


def _as_transition_batch(batch) -> TransitionBatch:
    if isinstance(batch, TransitionBatch):
        return batch
    batch = list(batch)
    if not batch:
        raise ValidationError("empty minibatch")
    return TransitionBatch.from_transitions(batch)


def td_targets(tb: TransitionBatch, target: EncoderParams, enc_cfg: EncoderConfig,
               gamma: float) -> np.ndarray:
    """r + γ·max over items not in the next state of Q'(s', ·); bootstrap dropped at terminals."""
    with nn.no_grad():
        q_next = encode(tb.next, target, enc_cfg).data
    legal = _legal_mask(tb.next, enc_cfg.n_out)
    best = np.where(legal, q_next, -np.inf).max(axis=1)
    alive = (~tb.terminal) & np.isfinite(best)
    return tb.rewards + gamma * np.where(alive, best, 0.0)


def dqn_loss(tb: TransitionBatch, behavior: EncoderParams, targets: np.ndarray,
             enc_cfg: EncoderConfig) -> nn.Tensor:
    q = nn.pick(encode(tb.prev, behavior, enc_cfg), tb.actions)
    return nn.mean_all(nn.smooth_l1_loss(nn.add(q, -targets)))


def dqn_learn_step(batch, behavior: EncoderParams, target: EncoderParams, cfg: DQNConfig,
                   enc_cfg: EncoderConfig, adam: AdamState) -> float:
    """One Adam step on the mean smooth-L1 TD error of a minibatch. Returns the loss."""
    tb = _as_transition_batch(batch)
    if len(tb) == 0:
        raise ValidationError("empty minibatch")
    y = td_targets(tb, target, enc_cfg, cfg.gamma)
    behavior.zero_grad()
    loss = dqn_loss(tb, behavior, y, enc_cfg)
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericError(f"DQN loss is not finite ({value}) at Adam step {adam.step + 1}")
    loss.backward()
    adam_step_checked(behavior, adam)
    return value


def adam_step_checked(params: ParameterSet, adam: AdamState):
    for name, p in params.items():
        if not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient in {name}")
    nn.adam_step(params, adam)


def target_sync(behavior: ParameterSet, target: ParameterSet):
    behavior.check_compatible(target)
    for name, p in behavior.items():
        np.copyto(target[name].data, p.data)


def soft_replace(source: ParameterSet, dest: ParameterSet, tau: float):
    """dest <- tau * source + (1 - tau) * dest, element-wise."""
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must lie in (0, 1], got {tau}")
    source.check_compatible(dest)
    for name, p in source.items():
        d = dest[name].data
        if tau == 1.0:
            np.copyto(d, p.data)
        else:
            d *= 1.0 - tau
            d += tau * p.data


class DQNAgent:
    def __init__(self, enc_cfg: EncoderConfig, cfg: DQNConfig, seed: int = 0):
        self.enc_cfg = enc_cfg
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.behavior = init_params(enc_cfg, self.rng)
        self.target = self.behavior.copy()
        self.memory = ReplayMemory(cfg.memory_size)
        self.adam = AdamState(lr=cfg.lr)
        self.learn_steps = 0
        self.last_loss = float("nan")

    def scores(self, users, states) -> np.ndarray:
        with nn.no_grad():
            return encode(states, self.behavior, self.enc_cfg).data

    def act(self, users, states, step: int) -> np.ndarray:
        return select_actions(self.scores(users, states), states, self.cfg.epsilon(step), self.rng)

    def observe(self, tr: Transition):
        self.memory.push(tr)

    def ready(self) -> bool:
        return len(self.memory) >= self.cfg.minibatch

    def learn(self) -> float:
        batch = self.memory.sample(self.cfg.minibatch, self.rng)
        self.last_loss = dqn_learn_step(batch, self.behavior, self.target, self.cfg, self.enc_cfg, self.adam)
        self.learn_steps += 1
        if self.learn_steps % self.cfg.target_sync_every == 0:
            target_sync(self.behavior, self.target)
        return self.last_loss

    def parameter_sets(self) -> dict[str, ParameterSet]:
        return {"behavior": self.behavior, "target": self.target}


# ---------------------------------------------------------------------------
# actor-critic


def policy_log_probs(states, actor: EncoderParams, actor_cfg: EncoderConfig) -> nn.Tensor:
    """log π(· | s): softmax over ranking scores q_iᵀ π(s) restricted to items not in s."""
    batch = states if isinstance(states, StateBatch) else StateBatch.from_states(list(states))
    pi = encode(batch, actor, actor_cfg)                        # (B, d)
    scores = nn.matmul(pi, _transpose(actor["item_emb"]))      # (B, n_items)
    return nn.log_softmax(scores, _legal_mask(batch, actor_cfg.n_items))


def _transpose(t: nn.Tensor) -> nn.Tensor:
    def backward(g):
        nn._accumulate(t, g.T)

    return nn._make(t.data.T, (t,), backward)


def ranking_scores(states, actor: EncoderParams, actor_cfg: EncoderConfig) -> np.ndarray:
    with nn.no_grad():
        pi = encode(states, actor, actor_cfg).data
    return pi @ actor["item_emb"].data.T


def sample_policy(states, actor: EncoderParams, actor_cfg: EncoderConfig,
                  rng: np.random.Generator) -> np.ndarray:
    with nn.no_grad():
        logp = policy_log_probs(states, actor, actor_cfg).data
    p = np.exp(logp)
    return np.array([rng.choice(len(row), p=row / row.sum()) for row in p], dtype=np.int64)


def critic_td_error(tb: TransitionBatch, critic: EncoderParams, critic_target: EncoderParams,
                    actor_target: EncoderParams, critic_cfg: EncoderConfig,
                    actor_cfg: EncoderConfig, gamma: float, rng: np.random.Generator):
    """TD targets r + γ Q(s', a'; θC') with a' ~ π_{θA'}(s'); bootstrap dropped at terminals."""
    boot = np.zeros(len(tb))
    live = ~tb.terminal
    if live.any():
        nxt = StateBatch(tb.next.items[live], tb.next.feedback[live], tb.next.lengths[live])
        a_next = sample_policy(nxt, actor_target, actor_cfg, rng)
        with nn.no_grad():
            q_next = encode(nxt, critic_target, critic_cfg).data
        boot[live] = q_next[np.arange(len(a_next)), a_next]
    return tb.rewards + gamma * boot


def critic_objective(tb: TransitionBatch, critic: EncoderParams, targets: np.ndarray,
                     critic_cfg: EncoderConfig) -> nn.Tensor:
    """0.5·mean(δ²) with δ = target - Q(s, a; θC); its negative gradient is the TD update."""
    q = nn.pick(encode(tb.prev, critic, critic_cfg), tb.actions)
    diff = nn.add(q, -targets)
    return nn.scale(nn.mean_all(nn.mul(diff, diff)), 0.5)


def actor_objective(tb: TransitionBatch, actor: EncoderParams, advantages: np.ndarray,
                    actor_cfg: EncoderConfig) -> nn.Tensor:
    """mean(Q(s, a; θC) · log π(a | s)); the actor ascends this."""
    logp = nn.pick(policy_log_probs(tb.prev, actor, actor_cfg), tb.actions)
    return nn.mean_all(nn.mul(logp, advantages))


def _sgd(params: ParameterSet, lr: float, sign: float):
    for name, p in params.items():
        if not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient in {name}")
    for p in params.tensors():
        p.data += sign * lr * p.grad


def ac_learn_step(transitions, actor: EncoderParams, critic: EncoderParams,
                  actor_target: EncoderParams, critic_target: EncoderParams,
                  cfg: ActorCriticConfig, actor_cfg: EncoderConfig, critic_cfg: EncoderConfig,
                  rng: np.random.Generator) -> tuple[float, float]:
    """Policy-gradient step for the actor, TD step for the critic, then soft replace.

    Accepts one Transition or a minibatch. Returns (actor objective, mean TD error).
    """
    tb = _as_transition_batch([transitions] if isinstance(transitions, Transition) else transitions)
    with nn.no_grad():
        q_sa = encode(tb.prev, critic, critic_cfg).data[np.arange(len(tb)), tb.actions]
    targets = critic_td_error(tb, critic, critic_target, actor_target, critic_cfg, actor_cfg, cfg.gamma, rng)
    td = targets - q_sa

    actor.zero_grad()
    j = actor_objective(tb, actor, q_sa, actor_cfg)
    j.backward()
    _sgd(actor, cfg.lr_actor, +1.0)

    critic.zero_grad()
    c = critic_objective(tb, critic, targets, critic_cfg)
    if not math.isfinite(float(c.data)) or not math.isfinite(float(j.data)):
        raise NumericError("actor-critic objective is not finite")
    c.backward()
    _sgd(critic, cfg.lr_critic, -1.0)

    soft_replace(actor, actor_target, cfg.tau)
    soft_replace(critic, critic_target, cfg.tau)
    return float(j.data), float(td.mean())


class ActorCriticAgent:
    def __init__(self, enc_cfg: EncoderConfig, cfg: ActorCriticConfig, seed: int = 0):
        self.critic_cfg = enc_cfg
        self.actor_cfg = EncoderConfig(enc_cfg.kind, enc_cfg.n_items, enc_cfg.d, enc_cfg.d_hidden,
                                       enc_cfg.activation, enc_cfg.t_max, out_dim=enc_cfg.d)
        self.enc_cfg = enc_cfg
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.actor = init_params(self.actor_cfg, self.rng)
        self.critic = init_params(self.critic_cfg, self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.memory = ReplayMemory(cfg.memory_size)
        self.learn_steps = 0
        self.last_loss = float("nan")

    def scores(self, users, states) -> np.ndarray:
        return ranking_scores(states, self.actor, self.actor_cfg)

    def act(self, users, states, step: int) -> np.ndarray:
        return sample_policy(states, self.actor, self.actor_cfg, self.rng)

    def observe(self, tr: Transition):
        self.memory.push(tr)

    def ready(self) -> bool:
        return len(self.memory) >= self.cfg.minibatch

    def learn(self) -> float:
        batch = self.memory.sample(self.cfg.minibatch, self.rng)
        _, td = ac_learn_step(batch, self.actor, self.critic, self.actor_target, self.critic_target,
                              self.cfg, self.actor_cfg, self.critic_cfg, self.rng)
        self.learn_steps += 1
        self.last_loss = td
        return td

    def parameter_sets(self) -> dict[str, ParameterSet]:
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}
