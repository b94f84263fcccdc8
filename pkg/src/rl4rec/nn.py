"""Small reverse-mode autodiff core on top of numpy.

Everything is float64. Ops are batched over leading axes where that is
useful for the encoders (a minibatch of states is a leading axis of size B).
Parameters are leaf :class:`Tensor` objects grouped in a :class:`ParameterSet`.
"""

from __future__ import annotations

import contextlib
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError, NumericError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording a graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array plus an accumulated gradient of the same shape."""

    __slots__ = ("data", "_grad", "_parents", "_backward")

    def __init__(self, data, _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self._parents = _parents
        self._backward = _backward
        self._grad = None

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self._grad = np.zeros_like(self.data)

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``.

        Interior gradients are reset on each call, so running backward twice
        after ``zero_grad`` gives the same leaf gradients as running it once.
        """
        if seed is None:
            if self.data.size != 1:
                raise ContractError(f"backward() without seed needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        order = _topo(self)
        for node in order:
            if node._parents:
                node._grad = None
        _accumulate(self, np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node._grad is not None:
                node._backward(node._grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _topo(root: Tensor) -> list[Tensor]:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray):
    # out-of-place: an incoming g may be shared with sibling nodes, so never mutate it
    if t._grad is None:
        t._grad = g.reshape(t.data.shape) if g.shape != t.data.shape else g
    else:
        t._grad = t._grad + g


def scatter_rows(n_rows: int, idx: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Sum rows of g into an (n_rows, ...) array at positions idx (a fast np.add.at)."""
    trailing = g.shape[idx.ndim:]
    idx = idx.reshape(-1)
    g = g.reshape(len(idx), int(np.prod(trailing)))
    out = np.zeros((n_rows, g.shape[1]))
    if len(idx) == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    starts = np.flatnonzero(np.r_[True, sidx[1:] != sidx[:-1]])
    out[sidx[starts]] = np.add.reduceat(g[order], starts, axis=0)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple, backward) -> Tensor:
    if _grad_enabled:
        return Tensor(data, parents, backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), backward)


def mul(a, b) -> Tensor:
    """Broadcasting product. Constants may be plain arrays."""
    if not isinstance(b, Tensor):
        b = np.asarray(b, dtype=np.float64)
        bdata = b

        def backward_const(g):
            _accumulate(a, _unbroadcast(g * bdata, a.shape))

        return _make(a.data * bdata, (a,), backward_const)
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def elementwise_product(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"elementwise_product shape mismatch: {a.shape} vs {b.shape}")
    return mul(a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        if b.data.ndim == 2:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _make(out, (a, b), backward)


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` over the last axis of x (i.e. Wᵀx + b per row)."""
    x = _as_tensor(x)
    if W.data.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise DimensionError(
            f"linear shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    out = x.data @ W.data + b.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        _accumulate(x, g @ W.data.T)
        _accumulate(W, x.data.reshape(-1, x.shape[-1]).T @ g2)
        _accumulate(b, g2.sum(axis=0))

    return _make(out, (x, W, b), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def concat(ts: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in ts]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        for t, part in zip(ts, np.split(g, sizes, axis=axis)):
            _accumulate(t, part)

    return _make(out, tuple(ts), backward)


def take(table: Tensor, idx) -> Tensor:
    """Row lookup ``table[idx]`` (embedding gather)."""
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        _accumulate(table, scatter_rows(table.shape[0], idx, g).reshape(table.shape))

    return _make(table.data[idx], (table,), backward)


def embed_products(table_a: Tensor, idx_a, table_b: Tensor, idx_b, mask=None) -> Tensor:
    """Fused ``table_a[idx_a] * table_b[idx_b]`` with optional 0/1 mask on the index axes."""
    idx_a = np.asarray(idx_a, dtype=np.intp)
    idx_b = np.asarray(idx_b, dtype=np.intp)
    A = table_a.data[idx_a]
    Bv = table_b.data[idx_b]
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)[..., None]
        A = A * m
    out = A * Bv

    def backward(g):
        ga = g * Bv
        if mask is not None:
            ga = ga * m
        _accumulate(table_a, scatter_rows(table_a.shape[0], idx_a, ga).reshape(table_a.shape))
        _accumulate(table_b, scatter_rows(table_b.shape[0], idx_b, g * A).reshape(table_b.shape))

    return _make(out, (table_a, table_b), backward)


def take_along_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Per-sample row permutation: ``out[b, k] = x[b, idx[b, k]]`` for x of shape (B, R, C)."""
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(x.shape[0])[:, None]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        _accumulate(x, gx)

    return _make(x.data[rows, idx], (x,), backward)


def pick(x: Tensor, idx) -> Tensor:
    """``out[b] = x[b, idx[b]]`` for x of shape (B, n)."""
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(x.shape[0])

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[rows, idx] = g
        _accumulate(x, gx)

    return _make(x.data[rows, idx], (x,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(a.data.sum(), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def average_pool(vs: Sequence[Tensor]) -> Tensor:
    """Component-wise mean of a non-empty list of equal-shape tensors."""
    if len(vs) == 0:
        raise ContractError("average_pool of an empty list; apply the empty-state convention first")
    shape = vs[0].shape
    for v in vs:
        if v.shape != shape:
            raise DimensionError(f"average_pool shape mismatch: {shape} vs {v.shape}")
    n = len(vs)
    out = sum(v.data for v in vs) / n

    def backward(g):
        for v in vs:
            _accumulate(v, g / n)

    return _make(out, tuple(vs), backward)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of x (B, T, d) counting only positions where mask is set.

    Rows with no set positions give the zero vector.
    """
    m = np.asarray(mask, dtype=np.float64)[..., None]
    counts = np.maximum(m.sum(axis=1), 1.0)
    out = (x.data * m).sum(axis=1) / counts

    def backward(g):
        _accumulate(x, (g / counts)[:, None, :] * m)

    return _make(out, (x,), backward)


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


ACTIVATIONS = ("tanh", "relu", "sigmoid")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        y = np.tanh(x.data)
        d = 1.0 - y * y
    elif kind == "relu":
        y = np.maximum(x.data, 0.0)
        d = (x.data > 0).astype(np.float64)
    elif kind == "sigmoid":
        y = _sigmoid(x.data)
        d = y * (1.0 - y)
    else:
        raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")

    def backward(g):
        _accumulate(x, g * d)

    return _make(y, (x,), backward)


def softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis, max-shifted.

    Masked-out entries get probability 0; a fully masked row is all zeros.
    """
    z = logits.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.exp(z - zmax)
    s = e.sum(axis=-1, keepdims=True)
    p = e / np.where(s > 0, s, 1.0)

    def backward(g):
        _accumulate(logits, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _make(p, (logits,), backward)


def log_softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Log-probabilities over the last axis; masked entries are -inf with zero gradient."""
    z = logits.data
    if mask is not None:
        z = np.where(np.asarray(mask, dtype=bool), z, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        gz = np.where(np.isfinite(out), g, 0.0)
        _accumulate(logits, gz - p * gz.sum(axis=-1, keepdims=True))

    return _make(out, (logits,), backward)


def pair_dots(x: Tensor) -> Tensor:
    """Inner products x_j·x_k for all pairs j < k along axis 1 of x (B, T, d) -> (B, T(T-1)/2)."""
    T = x.shape[1]
    ju, ku = np.triu_indices(T, k=1)
    gram = np.einsum("btd,bsd->bts", x.data, x.data)

    def backward(g):
        G = np.zeros((x.shape[0], T, T))
        G[:, ju, ku] = g
        G = G + np.swapaxes(G, 1, 2)
        _accumulate(x, np.einsum("bts,bsd->btd", G, x.data))

    return _make(gram[:, ju, ku], (x,), backward)


def smooth_l1(delta: float) -> float:
    a = abs(delta)
    return 0.5 * delta * delta if a < 1.0 else a


def smooth_l1_grad(delta: float) -> float:
    return delta if abs(delta) < 1.0 else math.copysign(1.0, delta)


def smooth_l1_loss(delta: Tensor) -> Tensor:
    """Element-wise 0.5·d² where |d| < 1, |d| elsewhere (no offset, so it jumps at |d| = 1)."""
    d = delta.data
    small = np.abs(d) < 1.0
    out = np.where(small, 0.5 * d * d, np.abs(d))
    dd = np.where(small, d, np.sign(d))

    def backward(g):
        _accumulate(delta, g * dd)

    return _make(out, (delta,), backward)


# ---------------------------------------------------------------------------
# fused layers


def gru_cell(h_prev: Tensor, x: Tensor, W_G: Mapping[str, Tensor]) -> Tensor:
    """One GRU step.

    ``W_G`` holds ``W_x`` (d, 3d'), ``W_h`` (d', 3d') and ``b`` (3d'), gate
    blocks ordered update z, reset r, candidate n::

        z = σ(x Wx_z + h Wh_z + b_z)
        r = σ(x Wx_r + h Wh_r + b_r)
        n = tanh(x Wx_n + (r ⊙ h) Wh_n + b_n)
        h' = (1 - z) ⊙ h + z ⊙ n
    """
    h_prev, x = _as_tensor(h_prev), _as_tensor(x)
    Wx, Wh, b = W_G["W_x"], W_G["W_h"], W_G["b"]
    dh_ = Wh.shape[0]
    if (Wx.shape[1] != 3 * dh_ or Wh.shape != (dh_, 3 * dh_) or b.shape != (3 * dh_,)
            or x.shape[-1] != Wx.shape[0] or h_prev.shape[-1] != dh_
            or h_prev.shape[:-1] != x.shape[:-1]):
        raise DimensionError(
            f"gru_cell shape mismatch: h {h_prev.shape}, x {x.shape}, "
            f"W_x {Wx.shape}, W_h {Wh.shape}, b {b.shape}")
    lead = x.shape[:-1]
    X = x.data.reshape(-1, x.shape[-1])
    H = h_prev.data.reshape(-1, dh_)
    gx = X @ Wx.data + b.data
    hzr = H @ Wh.data[:, : 2 * dh_]
    z = _sigmoid(gx[:, :dh_] + hzr[:, :dh_])
    r = _sigmoid(gx[:, dh_: 2 * dh_] + hzr[:, dh_:])
    rh = r * H
    n = np.tanh(gx[:, 2 * dh_:] + rh @ Wh.data[:, 2 * dh_:])
    out = H + z * (n - H)

    def backward(g):
        g = g.reshape(-1, dh_)
        dz = g * (n - H) * z * (1.0 - z)
        dn = g * z * (1.0 - n * n)
        dH = g * (1.0 - z)
        drh = dn @ Wh.data[:, 2 * dh_:].T
        dr = drh * H * r * (1.0 - r)
        dH += drh * r
        dzr = np.concatenate([dz, dr], axis=1)
        dH += dzr @ Wh.data[:, : 2 * dh_].T
        dgx = np.concatenate([dz, dr, dn], axis=1)
        dWh = np.concatenate([H.T @ dzr, rh.T @ dn], axis=1)
        _accumulate(Wx, X.T @ dgx)
        _accumulate(Wh, dWh)
        _accumulate(b, dgx.sum(axis=0))
        _accumulate(x, (dgx @ Wx.data.T).reshape(x.shape))
        _accumulate(h_prev, dH.reshape(h_prev.shape))

    return _make(out.reshape(lead + (dh_,)), (h_prev, x, Wx, Wh, b), backward)


def conv_maxpool(inp: Tensor, W_C: Mapping[str, Tensor]) -> Tensor:
    """3x3 convolution (stride 1), ReLU, then a global max per channel.

    ``inp`` is (rows, cols) or (B, rows, cols); ``W_C`` holds ``W`` (C, 3, 3)
    and ``b`` (C,). The gradient of the max goes to the first maximal position
    in row-major order.
    """
    inp = _as_tensor(inp)
    W, b = W_C["W"], W_C["b"]
    kh, kw = W.shape[1:]
    single = inp.data.ndim == 2
    X = inp.data[None] if single else inp.data
    if X.ndim != 3 or X.shape[1] < kh or X.shape[2] < kw:
        raise DimensionError(f"conv_maxpool input {inp.shape} smaller than kernel {W.shape[1:]}")
    B, R, C = X.shape
    win = sliding_window_view(X, (kh, kw), axis=(1, 2))  # (B, R', C', kh, kw)
    Ro, Co = win.shape[1:3]
    n_ch = W.shape[0]
    patches = win.reshape(B, Ro * Co, kh * kw)
    # channel-major pre-activations so the max runs over a contiguous axis
    pre = np.matmul(W.data.reshape(n_ch, kh * kw), patches.transpose(0, 2, 1)) + b.data[:, None]
    # relu is monotone, so the max of relu(pre) is relu of the max of pre
    arg = np.argmax(pre, axis=2)  # (B, channels)
    ch = np.arange(n_ch)
    bi = np.arange(B)[:, None]
    pre_at = pre[bi, ch[None, :], arg]
    out = np.maximum(pre_at, 0.0)

    def backward(g):
        g = g.reshape(B, -1) * (pre_at > 0)
        ri, ci = np.divmod(arg, Co)  # (B, channels)
        # windows at the argmax positions: (B, channels, kh, kw)
        wsel = win[bi, ri, ci]
        _accumulate(W, np.einsum("bc,bckl->ckl", g, wsel))
        _accumulate(b, g.sum(axis=0))
        contrib = g[:, :, None, None] * W.data[None]  # (B, channels, kh, kw)
        dk = np.arange(kh)[:, None]
        dl = np.arange(kw)[None, :]
        flat = (bi[:, :, None, None] * R + ri[:, :, None, None] + dk) * C + ci[:, :, None, None] + dl
        gx = np.bincount(flat.ravel(), contrib.ravel(), minlength=X.size).reshape(X.shape)
        _accumulate(inp, gx[0] if single else gx)

    return _make(out[0] if single else out, (inp, W, b), backward)


# ---------------------------------------------------------------------------
# parameters and optimisation


class ParameterSet:
    """Ordered mapping of parameter name -> leaf Tensor."""

    def __init__(self, tensors: Mapping[str, Tensor] | None = None):
        self._t: dict[str, Tensor] = {}
        for k, v in (tensors or {}).items():
            self[k] = v

    def __setitem__(self, name: str, t):
        if name in self._t:
            raise ContractError(f"duplicate parameter id {name!r}")
        self._t[name] = t if isinstance(t, Tensor) else Tensor(t)

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __contains__(self, name):
        return name in self._t

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    def items(self):
        return self._t.items()

    def names(self) -> list[str]:
        return list(self._t)

    def tensors(self) -> list[Tensor]:
        return list(self._t.values())

    def sub(self, prefix: str) -> dict[str, Tensor]:
        """View of the entries under ``prefix.`` with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._t.items() if k.startswith(p)}

    def zero_grad(self):
        for t in self._t.values():
            t.zero_grad()

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: Tensor(v.data.copy()) for k, v in self._t.items()})

    def num_values(self) -> int:
        return sum(t.data.size for t in self._t.values())

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, t in self._t.items():
            h.update(k.encode())
            h.update(t.data.tobytes())
        return h.hexdigest()

    def check_compatible(self, other: "ParameterSet"):
        if list(self._t) != list(other._t):
            raise DimensionError(f"parameter names differ: {list(self._t)} vs {list(other._t)}")
        for k in self._t:
            if self[k].shape != other[k].shape:
                raise DimensionError(f"parameter {k!r} shape mismatch: {self[k].shape} vs {other[k].shape}")


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")


def adam_step(params: ParameterSet, state: AdamState):
    """One bias-corrected Adam update. Gradients are left in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def grad_check(f: Callable[[ParameterSet], Tensor], params: ParameterSet,
               step: float = 1e-5, names: Sequence[str] | None = None,
               floor: float = 1e-6) -> float:
    """Worst relative error between the analytic gradient and central differences.

    The relative error of one entry is ``|a - n| / max(|a|, |n|, floor)``. The
    floor keeps entries whose true gradient sits near the finite-difference
    roundoff level (about 1e-16 * |f| / step) from dominating the result.
    """
    params.zero_grad()
    out = f(params)
    if not np.isfinite(out.data).all():
        raise NumericError("grad_check: objective is not finite")
    out.backward()
    worst = 0.0
    for name in (names or params.names()):
        p = params[name]
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        assert np.shares_memory(flat, p.data)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + step
                fp = f(params).data.item()
                flat[i] = orig - step
                fm = f(params).data.item()
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise NumericError(f"grad_check: objective not finite perturbing {name}[{i}]")
            num = (fp - fm) / (2.0 * step)
            a = analytic.flat[i]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
    return worst
