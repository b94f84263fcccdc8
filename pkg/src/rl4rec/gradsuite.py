"""Finite-difference checks for every encoder and both agents' objectives.

Dimensions are kept small so the full suite runs in well under two minutes.
All parameters, biases included, are randomized so that ReLU and max-pool
kinks are unlikely to sit within a finite-difference step of the test point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .agents import TransitionBatch, Transition, actor_objective, critic_objective, dqn_loss
from .encoders import KINDS, EncoderConfig, State, T_MAX, encode, init_params

TOLERANCE = 1e-4


@dataclass
class GradResult:
    name: str
    length: int | None
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= TOLERANCE


def _randomized(cfg: EncoderConfig, rng: np.random.Generator):
    p = init_params(cfg, rng)
    for t in p.tensors():
        t.data[...] = rng.normal(0.0, 0.5, t.shape)
    return p


def random_states(rng: np.random.Generator, n_items: int, length: int, count: int) -> list[State]:
    return [State(rng.choice(n_items, length, replace=False), rng.integers(0, 2, length))
            for _ in range(count)]


def _random_transitions(rng, n_items, count) -> TransitionBatch:
    out = []
    for _ in range(count):
        L = int(rng.integers(0, T_MAX))
        s = random_states(rng, n_items, L, 1)[0]
        a = int(rng.choice(np.setdiff1d(np.arange(n_items), s.items)))
        fb = int(rng.integers(0, 2))
        nxt = s.append(a, fb)
        out.append(Transition(s, a, float(fb), nxt, len(nxt) == T_MAX))
    return TransitionBatch.from_transitions(out)


def encoder_checks(kind: str, seed: int = 0, n_states: int = 10, n_items: int = 12,
                   d: int = 4, d_hidden: int = 3) -> list[GradResult]:
    """One check per history length 1..10, each over ``n_states`` random states."""
    rng = np.random.default_rng([seed, KINDS.index(kind)])
    cfg = EncoderConfig(kind, n_items, d, d_hidden)
    params = _randomized(cfg, rng)
    results = []
    for length in range(1, T_MAX + 1):
        states = random_states(rng, n_items, length, n_states)
        coeff = rng.normal(size=(n_states, cfg.n_out))
        f = lambda P: nn.sum_all(nn.mul(encode(states, P, cfg), coeff))
        results.append(GradResult(f"encoder/{kind}", length, nn.grad_check(f, params)))
    return results


def objective_checks(kind: str, seed: int = 0, n_items: int = 12, d: int = 4,
                     d_hidden: int = 3, batch: int = 16) -> list[GradResult]:
    """DQN loss, critic objective and actor objective with ``kind`` as the encoder."""
    rng = np.random.default_rng([seed, 100 + KINDS.index(kind)])
    q_cfg = EncoderConfig(kind, n_items, d, d_hidden)
    a_cfg = EncoderConfig(kind, n_items, d, d_hidden, out_dim=d)
    tb = _random_transitions(rng, n_items, batch)
    targets = rng.normal(0.0, 2.0, batch)
    weights = rng.normal(size=batch)
    q_params = _randomized(q_cfg, rng)
    a_params = _randomized(a_cfg, rng)
    return [
        GradResult(f"dqn_loss/{kind}", None,
                   nn.grad_check(lambda P: dqn_loss(tb, P, targets, q_cfg), q_params)),
        GradResult(f"critic/{kind}", None,
                   nn.grad_check(lambda P: critic_objective(tb, P, targets, q_cfg), q_params)),
        GradResult(f"actor/{kind}", None,
                   nn.grad_check(lambda P: actor_objective(tb, P, weights, a_cfg), a_params)),
    ]


def run_suite(seed: int = 0, kinds=KINDS, n_states: int = 10) -> list[GradResult]:
    results = []
    for kind in kinds:
        results += encoder_checks(kind, seed, n_states)
        results += objective_checks(kind, seed)
    return results


def format_results(results: list[GradResult]) -> str:
    lines = []
    for r in results:
        where = f" len={r.length}" if r.length is not None else ""
        lines.append(f"{'PASS' if r.ok else 'FAIL'} {r.name}{where} rel_err={r.rel_error:.3e}")
    return "\n".join(lines) + "\n"
