"""State encoders: map an interaction history to a score vector over items.

Every encoder embeds each history position as ``q_item ⊗ f_feedback`` and
then pools, recurs, or convolves. The last layer is linear to ``out_dim``
(``n_items`` for a Q-network, ``d`` for an actor's ranking vector). An empty
history always yields the zero state vector, so the output is the bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .errors import ConfigError, DomainError, ValidationError
from .nn import ParameterSet, Tensor

T_MAX = 10
KINDS = ("BOI", "PLD", "Avg", "MLP", "CNN", "GRU", "Attention")
DIM_RANGE = (16, 32, 64)


@dataclass(frozen=True)
class State:
    """Recommended items and the matching binary feedback, oldest first."""

    items: tuple = ()
    feedback: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(int(i) for i in self.items))
        object.__setattr__(self, "feedback", tuple(int(f) for f in self.feedback))
        if len(self.items) != len(self.feedback):
            raise ValidationError(
                f"state has {len(self.items)} items but {len(self.feedback)} feedback values")
        if len(self.items) > T_MAX:
            raise ValidationError(f"state longer than {T_MAX}")
        if len(set(self.items)) != len(self.items):
            raise ValidationError(f"duplicate item in state {self.items}")
        if any(f not in (0, 1) for f in self.feedback):
            raise ValidationError(f"feedback must be 0/1, got {self.feedback}")

    def __len__(self):
        return len(self.items)

    def append(self, item: int, feedback: int) -> "State":
        return State(self.items + (item,), self.feedback + (feedback,))


@dataclass(frozen=True)
class EncoderConfig:
    kind: str
    n_items: int
    d: int = 32
    d_hidden: int = 32
    activation: str = "tanh"
    t_max: int = T_MAX
    out_dim: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        if self.n_items <= 0 or self.d <= 0 or self.d_hidden <= 0:
            raise ConfigError("n_items, d and d_hidden must be positive")
        if self.activation not in nn.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.kind == "CNN" and self.d < 3:
            raise ConfigError("CNN encoder needs d >= 3 for its 3x3 filters")

    @property
    def n_out(self) -> int:
        return self.out_dim if self.out_dim is not None else self.n_items


class EncoderParams(ParameterSet):
    """Parameters of one encoder; a ParameterSet with named accessors."""

    @property
    def item_emb(self) -> Tensor:
        return self["item_emb"]

    @property
    def feedback_emb(self) -> Tensor:
        return self["feedback_emb"]

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: Tensor(v.data.copy()) for k, v in self.items()})


def state_input_dim(cfg: EncoderConfig) -> int:
    T, d = cfg.t_max, cfg.d
    return {
        "BOI": T * d,
        "PLD": T * d + T * (T - 1) // 2,
        "Avg": d,
        "MLP": d,
        "CNN": cfg.d_hidden,
        "GRU": cfg.d_hidden,
        "Attention": 2 * cfg.d_hidden,
    }[cfg.kind]


def init_params(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    """Uniform(±1/sqrt(fan_in)) weights, zero biases, importance weights 1."""
    d, dh = cfg.d, cfg.d_hidden
    p = EncoderParams()
    p["item_emb"] = nn.uniform_init(rng, (cfg.n_items, d), d)
    p["feedback_emb"] = nn.uniform_init(rng, (2, d), d)
    if cfg.kind in ("BOI", "PLD"):
        p["w"] = np.ones(cfg.t_max)
    if cfg.kind == "CNN":
        p["conv.W"] = nn.uniform_init(rng, (dh, 3, 3), 9)
        p["conv.b"] = np.zeros(dh)
    if cfg.kind in ("GRU", "Attention"):
        p["gru.W_x"] = nn.uniform_init(rng, (d, 3 * dh), d)
        p["gru.W_h"] = nn.uniform_init(rng, (dh, 3 * dh), dh)
        p["gru.b"] = np.zeros(3 * dh)
    if cfg.kind == "Attention":
        p["att.W_A"] = nn.uniform_init(rng, (dh, dh), dh)
    n_in = state_input_dim(cfg)
    p["W"] = nn.uniform_init(rng, (n_in, cfg.n_out), n_in)
    p["b"] = np.zeros(cfg.n_out)
    return p


@dataclass
class StateBatch:
    """Left-aligned, zero-padded arrays for a list of states."""

    items: np.ndarray     # (B, T) int
    feedback: np.ndarray  # (B, T) int
    lengths: np.ndarray   # (B,) int

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.items.shape[1])[None, :] < self.lengths[:, None]

    def __len__(self):
        return len(self.lengths)

    @classmethod
    def from_states(cls, states: Sequence[State], t_max: int = T_MAX) -> "StateBatch":
        B = len(states)
        items = np.zeros((B, t_max), dtype=np.int64)
        fb = np.zeros((B, t_max), dtype=np.int64)
        lengths = np.zeros(B, dtype=np.int64)
        for k, s in enumerate(states):
            t = len(s.items)
            items[k, :t] = s.items
            fb[k, :t] = s.feedback
            lengths[k] = t
        return cls(items, fb, lengths)


def _as_batch(state, cfg: EncoderConfig) -> tuple[StateBatch, bool]:
    if isinstance(state, StateBatch):
        batch, single = state, False
    elif isinstance(state, State):
        batch, single = StateBatch.from_states([state], cfg.t_max), True
    else:
        batch, single = StateBatch.from_states(list(state), cfg.t_max), False
    mask = batch.mask
    bad = batch.items[mask]
    if bad.size and (bad.max() >= cfg.n_items or bad.min() < 0):
        raise DomainError(f"item id out of range [0, {cfg.n_items})")
    return batch, single


def _products(batch: StateBatch, params: EncoderParams) -> Tensor:
    """(B, T, d) tensor of q_item ⊗ f_feedback, zero at padded positions."""
    return nn.embed_products(params["item_emb"], batch.items, params["feedback_emb"],
                             batch.feedback, batch.mask)


def _boi_part(x: Tensor, params: EncoderParams) -> Tensor:
    T = x.shape[1]
    return nn.mul(x, nn.reshape(params["w"], (1, T, 1)))


def _state_boi(batch, params, cfg):
    y = _boi_part(_products(batch, params), params)
    return nn.reshape(y, (len(batch), -1))


def _state_pld(batch, params, cfg):
    y = _boi_part(_products(batch, params), params)
    e = nn.pair_dots(y)
    return nn.concat([nn.reshape(y, (len(batch), -1)), e], axis=1)


def _state_avg(batch, params, cfg):
    return nn.masked_mean(_products(batch, params), batch.mask)


def _cnn_rows(batch: StateBatch) -> np.ndarray:
    # stacked input is [q_1..q_T ; f_1..f_T]; reorder to q_1..q_t, f_1..f_t, then padding
    B, T = batch.items.shape
    idx = np.empty((B, 2 * T), dtype=np.intp)
    pos = np.arange(T)
    for k, t in enumerate(batch.lengths):
        pads = np.concatenate([pos[t:], T + pos[t:]])
        idx[k] = np.concatenate([pos[:t], T + pos[:t], pads])
    return idx


def _state_cnn(batch, params, cfg):
    m = batch.mask[..., None].astype(np.float64)
    q = nn.mul(nn.take(params["item_emb"], batch.items), m)
    f = nn.mul(nn.take(params["feedback_emb"], batch.feedback), m)
    rows = nn.take_along_rows(nn.concat([q, f], axis=1), _cnn_rows(batch))
    pooled = nn.conv_maxpool(rows, params.sub("conv"))
    # empty history -> zero pooled vector regardless of conv bias
    return nn.mul(pooled, (batch.lengths > 0).astype(np.float64)[:, None])


def _gru_states(batch, params, cfg) -> tuple[list[Tensor], Tensor]:
    """Hidden states h_1..h_L (L = longest history in batch) and the final h_t per row."""
    x = _products(batch, params)
    W_G = params.sub("gru")
    B = len(batch)
    h = Tensor(np.zeros((B, cfg.d_hidden)))
    hs = []
    L = int(batch.lengths.max()) if B else 0
    for k in range(L):
        xk = nn.reshape(_slice_t(x, k), (B, -1))
        h_new = nn.gru_cell(h, xk, W_G)
        live = (batch.lengths > k).astype(np.float64)[:, None]
        if live.all():
            h = h_new
        else:
            h = nn.add(nn.mul(h_new, live), nn.mul(h, 1.0 - live))
        hs.append(h)
    return hs, h


def _slice_t(x: Tensor, k: int) -> Tensor:
    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, k] = g
        nn._accumulate(x, gx)

    return nn._make(x.data[:, k], (x,), backward)


def _state_gru(batch, params, cfg):
    return _gru_states(batch, params, cfg)[1]


def attention_weights(batch, params, cfg) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (weights (B, L), context (B, d'), h_t (B, d'))."""
    hs, ht = _gru_states(batch, params, cfg)
    B = len(batch)
    if not hs:
        z = Tensor(np.zeros((B, cfg.d_hidden)))
        return Tensor(np.zeros((B, 0))), z, z
    H = nn.concat([nn.reshape(h, (B, 1, -1)) for h in hs], axis=1)  # (B, L, d')
    u = nn.matmul(ht, params["att.W_A"])                              # (B, d') = W_Aᵀ h_t
    logits = nn.reshape(nn.matmul(H, nn.reshape(u, (B, -1, 1))), (B, -1))
    mask = batch.mask[:, : len(hs)]
    a = nn.softmax(logits, mask)
    ctx = nn.reshape(nn.matmul(nn.reshape(a, (B, 1, -1)), H), (B, -1))
    return a, ctx, ht


def _state_attention(batch, params, cfg):
    _, ctx, ht = attention_weights(batch, params, cfg)
    return nn.concat([ctx, ht], axis=1)


_STATE_FNS = {
    "BOI": _state_boi,
    "PLD": _state_pld,
    "Avg": _state_avg,
    "MLP": _state_avg,
    "CNN": _state_cnn,
    "GRU": _state_gru,
    "Attention": _state_attention,
}


def encode(state, params: EncoderParams, cfg: EncoderConfig) -> Tensor:
    """Score vector for a State (-> Tensor[n_out]) or a batch (-> Tensor[B, n_out])."""
    batch, single = _as_batch(state, cfg)
    s = _STATE_FNS[cfg.kind](batch, params, cfg)
    out = nn.linear(s, params["W"], params["b"])
    if cfg.kind == "MLP":
        out = nn.activation(out, cfg.activation)
    if single:
        out = nn.reshape(out, (cfg.n_out,))
    return out


def _encoder(kind):
    def fn(state, params: EncoderParams, cfg: EncoderConfig) -> Tensor:
        if cfg.kind != kind:
            raise ConfigError(f"encode_{kind.lower()} called with a {cfg.kind} config")
        return encode(state, params, cfg)

    fn.__name__ = f"encode_{kind.lower()}"
    return fn


encode_boi = _encoder("BOI")
encode_pld = _encoder("PLD")
encode_avg = _encoder("Avg")
encode_mlp = _encoder("MLP")
encode_cnn = _encoder("CNN")
encode_gru = _encoder("GRU")
encode_attention = _encoder("Attention")
