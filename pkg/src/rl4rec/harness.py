"""Experiment runner: build simulators, train an agent, evaluate, write curves."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import serialize
from .agents import ActorCriticAgent, DQNAgent, Transition, select_actions
from .config import RunConfig, dump_config, eval_batch_size, validate
from .data import Dataset, load_dataset, split_holdout, synth_biased
from .encoders import KINDS, EncoderConfig, State, T_MAX
from .errors import NumericError, ValidationError
from .simulator import (Environment, PreferenceModel, estimate_propensities,
                        train_preference_ips)

log = logging.getLogger(__name__)

CSV_HEADER = ["step", "mean_clicks", "std_clicks"] + [f"turn_{k}" for k in range(1, T_MAX + 1)] + ["elapsed_s"]


@dataclass
class CurvePoint:
    step: int
    mean_clicks: float
    std_clicks: float
    per_turn: tuple
    elapsed_s: float = 0.0

    def row(self) -> list[str]:
        fmt = lambda x: format(float(x), ".10g")
        return ([str(self.step), fmt(self.mean_clicks), fmt(self.std_clicks)]
                + [fmt(x) for x in self.per_turn] + [fmt(self.elapsed_s)])


@dataclass
class Simulators:
    train_env: Environment
    eval_env: Environment
    train_model: PreferenceModel | None = None
    eval_model: PreferenceModel | None = None
    propensities: object = None


# ---------------------------------------------------------------------------
# environments


def tiny_ratings(n_users: int = 20, n_items: int = 50, liked: int = 10, seed: int = 0) -> np.ndarray:
    """Rating matrix where every user rates the same ``liked`` items 4.5-5 and the rest 1-3."""
    rng = np.random.default_rng(seed)
    R = rng.uniform(1.0, 3.0, (n_users, n_items))
    good = rng.choice(n_items, size=liked, replace=False)
    R[:, good] = rng.uniform(4.5, 5.0, (n_users, liked))
    return R


def load_simulator(path) -> tuple[PreferenceModel, np.ndarray, float]:
    b = serialize.read_matrices(path)
    model = PreferenceModel(b["U"], b["V"], b["b_user"].ravel(), b["b_item"].ravel(), float(b["mu"][0, 0]))
    return model, b["users"].ravel().astype(np.int64), float(b["threshold"][0, 0])


def save_simulator(path, model: PreferenceModel, users, threshold: float):
    serialize.write_matrices(path, {
        "U": model.U, "V": model.V, "b_user": model.b_user, "b_item": model.b_item,
        "mu": np.array([model.mu]), "users": np.asarray(users, dtype=np.float64),
        "threshold": np.array([threshold])})


def load_configured_dataset(cfg: RunConfig) -> Dataset:
    ds = cfg.dataset
    if ds.kind == "synthetic":
        return synth_biased(ds.n_users or 300, ds.n_items or 200, ds.k_true, ds.skew, cfg.seed,
                            ds.density, positivity=ds.positivity).dataset
    if ds.kind in ("yahoo_r3", "coat"):
        return load_dataset(ds.train_path, ds.test_path, ds.kind,
                            ds.n_users or None, ds.n_items or None)
    raise ValidationError(f"dataset.kind {ds.kind!r} has no rating data")


def fit_simulators(dataset: Dataset, cfg: RunConfig) -> Simulators:
    """Debiased training simulator from the biased split, plain one from the MCAR split.

    A seeded slice of the MCAR split feeds propensity estimation; the rest is
    the evaluation simulator's training data.
    """
    if dataset.train.provenance != "biased":
        raise ValidationError("training simulator must be fit on the biased split")
    if dataset.test.provenance != "mcar":
        raise ValidationError("evaluation simulator must be fit on the MCAR split")
    eval_part, mcar_slice = split_holdout(dataset.test, cfg.sim.mcar_fraction, cfg.seed)
    prop = estimate_propensities(dataset.train, mcar_slice, dataset.n_users, dataset.n_items, cfg.sim.p_min)
    train_model = train_preference_ips(dataset.train, prop, cfg.sim.debias, dataset.n_users,
                                       dataset.n_items, cfg.mf, cfg.seed)
    eval_model = train_preference_ips(eval_part, None, False, dataset.n_users, dataset.n_items,
                                      cfg.mf, cfg.seed + 1)
    th = cfg.sim.threshold
    return Simulators(
        Environment.from_model(train_model, th, seed=cfg.seed),
        Environment.from_model(eval_model, th, users=np.unique(eval_part.users), seed=cfg.seed + 1),
        train_model, eval_model, prop)


def build_simulators(cfg: RunConfig) -> Simulators:
    ds = cfg.dataset
    th = cfg.sim.threshold
    if ds.kind == "tiny":
        R = tiny_ratings(ds.n_users or 20, ds.n_items or 50, ds.liked, cfg.seed)
        return Simulators(Environment(R, th, seed=cfg.seed), Environment(R, th, seed=cfg.seed + 1))
    if ds.kind == "fitted":
        tm, tu, tth = load_simulator(ds.train_sim)
        em, eu, eth = load_simulator(ds.eval_sim)
        return Simulators(Environment.from_model(tm, tth, tu, seed=cfg.seed),
                          Environment.from_model(em, eth, eu, seed=cfg.seed + 1), tm, em)
    return fit_simulators(load_configured_dataset(cfg), cfg)


def make_agent(cfg: RunConfig, n_items: int, seed: int | None = None):
    e = cfg.encoder
    enc = EncoderConfig(e.kind, n_items, e.d, e.d_hidden, e.activation)
    seed = cfg.seed if seed is None else seed
    if cfg.agent == "dqn":
        return DQNAgent(enc, cfg.dqn, seed)
    return ActorCriticAgent(enc, cfg.ac, seed)


# ---------------------------------------------------------------------------
# training and evaluation


class Trainer:
    """Steps a batch of users through episodes in lock-step, one learn step per environment step."""

    def __init__(self, agent, env: Environment, train_users: int, rng: np.random.Generator):
        self.agent = agent
        self.env = env
        self.train_users = min(train_users, len(env.users))
        self.rng = rng
        self.step = 0
        self.active: dict[int, State] = {}
        self.queue: list[tuple[int, int]] = []

    def _plan_turn(self):
        live = [(u, s) for u, s in self.active.items() if len(s) < T_MAX]
        if not live:
            self.active = dict(self.env.reset(self.train_users, self.rng))
            live = list(self.active.items())
        users = [u for u, _ in live]
        states = [s for _, s in live]
        actions = self.agent.act(users, states, self.step)
        self.queue = list(zip(users, actions.tolist()))[::-1]

    def run_steps(self, n: int):
        for _ in range(n):
            if not self.queue:
                self._plan_turn()
            user, action = self.queue.pop()
            prev = self.active[user]
            _, reward, nxt, done = self.env.step(user, action)
            self.active[user] = nxt
            self.agent.observe(Transition(prev, action, reward, nxt, done))
            self.step += 1
            if self.agent.ready():
                self.agent.learn()


def evaluate_policy(agent, env: Environment, batch_size: int, seed: int, step: int = 0) -> CurvePoint:
    """Greedy 10-turn rollouts for a uniformly sampled user batch; no learning."""
    rng = np.random.default_rng(seed)
    batch = env.reset(min(batch_size, len(env.users)), rng)
    users = [u for u, _ in batch]
    states = [s for _, s in batch]
    clicks = np.zeros((len(users), T_MAX))
    for t in range(T_MAX):
        actions = select_actions(agent.scores(users, states), states, 0.0, rng)
        for k, (u, a) in enumerate(zip(users, actions.tolist())):
            fb, _, states[k], _ = env.step(u, a)
            clicks[k, t] = fb
    total = clicks.sum(axis=1)
    return CurvePoint(step, float(total.mean()), float(total.std()), tuple(clicks.mean(axis=0).tolist()))


class OracleAgent:
    """Scores items by the environment's own ratings; a cheating upper-bound baseline."""

    def __init__(self, env: Environment):
        self.env = env

    def scores(self, users, states) -> np.ndarray:
        return self.env.ratings[np.asarray(users)]


@dataclass
class RunResult:
    points: list
    agent: object
    out_dir: Path | None


def _save_params(agent, path):
    blocks = {}
    for set_name, ps in agent.parameter_sets().items():
        for name, t in ps.items():
            blocks[f"{set_name}.{name}"] = t.data
    serialize.write_matrices(path, blocks)


def load_params(agent, path):
    blocks = serialize.read_matrices(path)
    for set_name, ps in agent.parameter_sets().items():
        for name, t in ps.items():
            key = f"{set_name}.{name}"
            if key not in blocks:
                raise ValidationError(f"{path}: missing parameter block {key}")
            arr = blocks[key]
            if arr.size != t.data.size:
                raise ValidationError(f"{path}: block {key} has {arr.size} values, expected {t.data.size}")
            t.data[...] = arr.reshape(t.data.shape)


def run_experiment(cfg: RunConfig, write: bool = True, sims: Simulators | None = None) -> RunResult:
    """Train on the debiased simulator and evaluate greedily on the unbiased one.

    Writes ``curve.csv`` (flushed after every evaluation), ``config.cfg``,
    ``params.mat`` and ``summary.json`` into ``cfg.out`` when ``write`` is set.
    """
    validate(cfg)
    sims = sims or build_simulators(cfg)
    agent = make_agent(cfg, sims.train_env.n_items)
    trainer = Trainer(agent, sims.train_env, cfg.train_users, np.random.default_rng([cfg.seed, 1]))
    eval_seed = cfg.seed * 1_000_003 + 17
    out_dir = Path(cfg.out) if write else None
    fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.cfg").write_text(dump_config(cfg))
        fh = open(out_dir / "curve.csv", "w", newline="")
    sink = fh if fh is not None else io.StringIO()
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    t0 = time.perf_counter()
    points: list[CurvePoint] = []

    def record():
        p = evaluate_policy(agent, sims.eval_env, eval_batch_size(cfg), eval_seed, trainer.step)
        p.elapsed_s = time.perf_counter() - t0 if cfg.record_wallclock else 0.0
        points.append(p)
        writer.writerow(p.row())
        sink.flush()
        log.info("step %d: mean clicks %.3f", p.step, p.mean_clicks)

    try:
        record()
        while trainer.step < cfg.total_steps:
            next_eval = min((trainer.step // cfg.eval_interval + 1) * cfg.eval_interval, cfg.total_steps)
            trainer.run_steps(next_eval - trainer.step)
            record()
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        _save_params(agent, out_dir / "params.mat")
        (out_dir / "summary.json").write_text(json.dumps({
            "final_mean_clicks": points[-1].mean_clicks,
            "steps": trainer.step,
            "learn_steps": agent.learn_steps,
        }, indent=2) + "\n")
    return RunResult(points, agent, out_dir)


def measure_training_time(cfg: RunConfig, n_steps: int = 1_000, warmup: int = 100, repeats: int = 5,
                          sims: Simulators | None = None) -> float:
    """Median wall-clock seconds for ``n_steps`` environment+learn steps after a warm-up."""
    sims = sims or build_simulators(cfg)
    agent = make_agent(cfg, sims.train_env.n_items)
    trainer = Trainer(agent, sims.train_env, cfg.train_users, np.random.default_rng([cfg.seed, 2]))
    trainer.run_steps(warmup)
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        trainer.run_steps(n_steps)
        times.append(time.perf_counter() - t)
    return statistics.median(times)


BENCH_SHAPES = {"Yahoo! R3": 1_000, "Coat": 300}


def bench_table(cfg: RunConfig, n_steps: int = 1_000, repeats: int = 5, warmup: int = 100,
                bench_users: int = 500) -> dict[str, dict[str, float]]:
    """Seconds per ``n_steps`` for every encoder on simulators shaped like each dataset.

    Timing depends on the item count and the encoder, not on rating values, so
    each dataset is stood in for by a random rating matrix with its item count.
    """
    table = {}
    for name, n_items in BENCH_SHAPES.items():
        R = np.random.default_rng(cfg.seed).uniform(1.0, 5.0, (bench_users, n_items))
        sims = Simulators(Environment(R, cfg.sim.threshold, seed=cfg.seed), None)
        row = {}
        for kind in KINDS:
            c = _with_encoder(cfg, kind)
            row[kind] = measure_training_time(c, n_steps, warmup, repeats, sims=sims)
            log.info("%s %s: %.2fs", name, kind, row[kind])
        table[name] = row
    return table


def _with_encoder(cfg: RunConfig, kind: str) -> RunConfig:
    from .config import set_key

    return set_key(cfg, "encoder.kind", kind)


def format_bench(table: dict[str, dict[str, float]]) -> str:
    lines = ["dataset," + ",".join(KINDS)]
    for name, row in table.items():
        lines.append(name + "," + ",".join(f"{row[k]:.2f}" for k in KINDS))
    return "\n".join(lines) + "\n"
