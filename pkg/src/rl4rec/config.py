"""Run configuration and its flat ``key = value`` file format.

One setting per line, ``section.field = value`` (top-level fields have no
section). ``#`` starts a comment, blank lines are skipped. Values are parsed
by the type of the field's default: ``true``/``false`` for booleans, Python
int/float literals for numbers, anything else verbatim as a string. Unknown
keys are rejected with the list of valid keys.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .agents import ActorCriticConfig, DQNConfig
from .errors import ConfigError
from .simulator import MFConfig

DATASET_KINDS = ("tiny", "synthetic", "yahoo_r3", "coat", "fitted")
AGENT_KINDS = ("dqn", "actor_critic")


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    train_path: str = ""
    test_path: str = ""
    # synthetic / tiny shape; 0 means "use the default for this kind"
    n_users: int = 0
    n_items: int = 0
    k_true: int = 4
    skew: float = 1.0
    positivity: float = 2.0
    density: float = 0.05
    liked: int = 10
    # pre-fitted simulators written by `simfit`
    train_sim: str = ""
    eval_sim: str = ""


@dataclass
class EncoderSpec:
    kind: str = "Avg"
    d: int = 32
    d_hidden: int = 32
    activation: str = "tanh"


@dataclass
class SimConfig:
    threshold: float = 4.0
    p_min: float = 1e-3
    mcar_fraction: float = 0.1
    debias: bool = True


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    agent: str = "dqn"
    dqn: DQNConfig = field(default_factory=DQNConfig)
    ac: ActorCriticConfig = field(default_factory=ActorCriticConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    mf: MFConfig = field(default_factory=MFConfig)
    total_steps: int = 10_000
    eval_interval: int = 1_000
    eval_batch: int = 0  # 0: 100 users for coat, 256 otherwise
    train_users: int = 16
    seed: int = 0
    out: str = "runs/default"
    record_wallclock: bool = True


def flatten(cfg, prefix: str = "") -> dict[str, object]:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(v):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def valid_keys() -> list[str]:
    return list(flatten(RunConfig()))


def _coerce(raw: str, current, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {type(current).__name__})") from None
    return raw


def set_key(cfg, key: str, raw) -> object:
    """Return a copy of ``cfg`` with the dotted ``key`` set from a string (or typed) value."""
    head, _, rest = key.partition(".")
    names = {f.name for f in dataclasses.fields(cfg)}
    if head not in names:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
    current = getattr(cfg, head)
    if rest:
        if not dataclasses.is_dataclass(current):
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
        new = set_key(current, rest, raw)
    else:
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"config key {key!r} names a section, not a value")
        new = _coerce(raw, current, key) if isinstance(raw, str) else raw
    return dataclasses.replace(cfg, **{head: new})


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg = set_key(cfg, k.strip(), v)
    return cfg


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        cfg = set_key(cfg, k.strip(), v)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in flatten(cfg).items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def eval_batch_size(cfg: RunConfig) -> int:
    if cfg.eval_batch:
        return cfg.eval_batch
    return 100 if cfg.dataset.kind == "coat" else 256


def validate(cfg: RunConfig):
    if cfg.agent not in AGENT_KINDS:
        raise ConfigError(f"agent must be one of {AGENT_KINDS}, got {cfg.agent!r}")
    ds = cfg.dataset
    if ds.kind not in DATASET_KINDS:
        raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {ds.kind!r}")
    if ds.kind in ("yahoo_r3", "coat"):
        for name in ("train_path", "test_path"):
            p = getattr(ds, name)
            if not p:
                raise ConfigError(f"dataset.{name} is required for dataset.kind = {ds.kind}")
            if not Path(p).is_file():
                raise ConfigError(f"dataset.{name} not found: {p}")
    if ds.kind == "fitted":
        for name in ("train_sim", "eval_sim"):
            p = getattr(ds, name)
            if not p or not Path(p).is_file():
                raise ConfigError(f"dataset.{name} missing or not found: {p!r}")
    if cfg.total_steps < 0 or cfg.eval_batch < 0 or cfg.eval_interval <= 0 or cfg.train_users <= 0:
        raise ConfigError("total_steps, eval_batch >= 0 and eval_interval, train_users > 0 required")
    if not 0.0 < cfg.sim.mcar_fraction < 1.0:
        raise ConfigError("sim.mcar_fraction must lie in (0, 1)")
    # constructing these re-runs their own checks
    DQNConfig(**{f.name: getattr(cfg.dqn, f.name) for f in dataclasses.fields(cfg.dqn)})
    ActorCriticConfig(**{f.name: getattr(cfg.ac, f.name) for f in dataclasses.fields(cfg.ac)})
