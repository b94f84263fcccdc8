"""Debiased user simulator: propensities, IPS-weighted matrix factorisation,
threshold choice model, and the 10-turn episode environment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import serialize
from .data import Ratings
from .encoders import State, T_MAX
from .errors import NumericError, ProtocolError, ValidationError

RATING_VALUES = np.arange(1, 6)


@dataclass
class PropensityModel:
    """Observation probabilities, per rating value (1..5) or per item."""

    per_rating: np.ndarray | None = None
    per_item: np.ndarray | None = None
    p_min: float = 1e-3

    def for_records(self, records: Ratings) -> np.ndarray:
        if self.per_rating is not None:
            p = self.per_rating[records.ratings - 1]
        elif self.per_item is not None:
            p = self.per_item[records.items]
        else:
            raise ValidationError("propensity model has neither per-rating nor per-item values")
        return np.clip(p, self.p_min, 1.0)

    @classmethod
    def uniform(cls, p: float) -> "PropensityModel":
        return cls(per_rating=np.full(5, float(p)), p_min=min(1e-3, p))

    def save(self, path):
        blocks = {"p_min": np.array([self.p_min])}
        if self.per_rating is not None:
            blocks["per_rating"] = self.per_rating
        if self.per_item is not None:
            blocks["per_item"] = self.per_item
        serialize.write_matrices(path, blocks)

    @classmethod
    def load(cls, path) -> "PropensityModel":
        b = serialize.read_matrices(path)
        return cls(b["per_rating"].ravel() if "per_rating" in b else None,
                   b["per_item"].ravel() if "per_item" in b else None,
                   float(b["p_min"][0, 0]))


def estimate_propensities(train: Ratings, mcar_sample: Ratings, n_users: int, n_items: int,
                          p_min: float = 1e-3) -> PropensityModel:
    """Naive-Bayes propensities P(o=1 | y=r) = P(y=r | o=1) P(o=1) / P(y=r).

    P(y=r | o=1) comes from the biased train split, P(y=r) from the MCAR
    sample. If some rating value is missing from the MCAR sample, P(y=r) uses
    Laplace-smoothed counts instead.
    """
    if len(train) == 0 or len(mcar_sample) == 0:
        raise ValidationError("propensity estimation needs non-empty train and MCAR samples")
    obs_counts = np.bincount(train.ratings - 1, minlength=5)[:5].astype(np.float64)
    mcar_counts = np.bincount(mcar_sample.ratings - 1, minlength=5)[:5].astype(np.float64)
    p_y_given_o = obs_counts / obs_counts.sum()
    if (mcar_counts == 0).any():
        p_y = (mcar_counts + 1.0) / (mcar_counts.sum() + 5.0)
    else:
        p_y = mcar_counts / mcar_counts.sum()
    p_o = len(train) / float(n_users * n_items)
    per_rating = np.clip(p_y_given_o * p_o / p_y, p_min, 1.0)
    return PropensityModel(per_rating=per_rating, p_min=p_min)


def estimate_item_propensities(train: Ratings, n_users: int, n_items: int,
                               p_min: float = 1e-3) -> PropensityModel:
    """Per-item fallback: fraction of users who rated each item."""
    counts = np.bincount(train.items, minlength=n_items).astype(np.float64)
    return PropensityModel(per_item=np.clip(counts / n_users, p_min, 1.0), p_min=p_min)


def ips_loss(delta: np.ndarray, observed: np.ndarray, propensity: np.ndarray) -> float:
    """Inverse-propensity estimate of the mean of ``delta`` over all cells."""
    return float((delta * observed / propensity).sum() / delta.size)


def naive_loss(delta: np.ndarray, observed: np.ndarray) -> float:
    """Mean of ``delta`` over observed cells only."""
    n = observed.sum()
    return float((delta * observed).sum() / n) if n else float("nan")


@dataclass
class PreferenceModel:
    """ŷ(u, i) = clamp(U_u·V_i + b_u + b_i + μ, 1, 5)."""

    U: np.ndarray
    V: np.ndarray
    b_user: np.ndarray
    b_item: np.ndarray
    mu: float

    @property
    def n_users(self) -> int:
        return self.U.shape[0]

    @property
    def n_items(self) -> int:
        return self.V.shape[0]

    @property
    def k(self) -> int:
        return self.U.shape[1]

    def raw(self, users, items) -> np.ndarray:
        return (self.U[users] * self.V[items]).sum(axis=-1) + self.b_user[users] + self.b_item[items] + self.mu

    def predict(self, users, items) -> np.ndarray:
        return np.clip(self.raw(users, items), 1.0, 5.0)

    def predict_matrix(self) -> np.ndarray:
        M = self.U @ self.V.T + self.b_user[:, None] + self.b_item[None, :] + self.mu
        return np.clip(M, 1.0, 5.0)

    def rmse(self, records: Ratings) -> float:
        err = self.predict(records.users, records.items) - records.ratings
        return float(np.sqrt(np.mean(err ** 2)))

    def save(self, path):
        serialize.write_matrices(path, {
            "U": self.U, "V": self.V, "b_user": self.b_user,
            "b_item": self.b_item, "mu": np.array([self.mu])})

    @classmethod
    def load(cls, path) -> "PreferenceModel":
        b = serialize.read_matrices(path)
        return cls(b["U"], b["V"], b["b_user"].ravel(), b["b_item"].ravel(), float(b["mu"][0, 0]))


@dataclass
class MFConfig:
    k: int = 32
    l2: float = 1e-4
    epochs: int = 50
    lr: float = 0.005
    batch_size: int = 64
    init_scale: float = 0.1


def train_preference_ips(train: Ratings, propensities: PropensityModel | None, debias: bool,
                         n_users: int, n_items: int, cfg: MFConfig | None = None,
                         seed: int = 0) -> PreferenceModel:
    """Fit matrix factorisation by minibatch SGD on Σ w·(y - ŷ)² + l2·‖θ‖².

    With ``debias`` the weights are 1/P(o=1) rescaled to mean 1 over the
    training records (a constant factor, so the minimiser is unchanged);
    otherwise every weight is 1.
    """
    cfg = cfg or MFConfig()
    if len(train) == 0:
        raise ValidationError("cannot fit a preference model on an empty split")
    if debias:
        if propensities is None:
            raise ValidationError("debiased training needs a propensity model")
        w = 1.0 / propensities.for_records(train)
        w = w / w.mean()
    else:
        w = np.ones(len(train))
    rng = np.random.default_rng(seed)
    U = rng.normal(0.0, cfg.init_scale, (n_users, cfg.k))
    V = rng.normal(0.0, cfg.init_scale, (n_items, cfg.k))
    bu = np.zeros(n_users)
    bi = np.zeros(n_items)
    mu = float(np.sum(w * train.ratings) / np.sum(w))
    users, items, y = train.users, train.items, train.ratings.astype(np.float64)
    n = len(train)
    lr, l2 = cfg.lr, cfg.l2
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start: start + cfg.batch_size]
            u, i, wb = users[idx], items[idx], w[idx]
            Uu, Vi = U[u], V[i]
            err = (Uu * Vi).sum(axis=1) + bu[u] + bi[i] + mu - y[idx]
            g = (2.0 * wb * err)[:, None]
            np.add.at(U, u, -lr * (g * Vi + 2.0 * l2 * Uu))
            np.add.at(V, i, -lr * (g * Uu + 2.0 * l2 * Vi))
            np.add.at(bu, u, -lr * (g[:, 0] + 2.0 * l2 * bu[u]))
            np.add.at(bi, i, -lr * (g[:, 0] + 2.0 * l2 * bi[i]))
            mu -= lr * g[:, 0].mean()
        err = (U[users] * V[items]).sum(axis=1) + bu[users] + bi[items] + mu - y
        loss = float(np.mean(w * err ** 2))
        if not math.isfinite(loss) or loss > 1e12:
            raise NumericError(f"preference model diverged at epoch {epoch + 1} (loss {loss})")
    return PreferenceModel(U, V, bu, bi, mu)


def choice(rating_hat: float, threshold: float = 4.0) -> int:
    """Deterministic click model: click iff the predicted rating reaches the threshold."""
    return int(rating_hat >= threshold)


class Environment:
    """Ten-turn recommendation episodes for a batch of users.

    ``ratings`` is the (n_users, n_items) matrix of predicted ratings; reward
    equals the click indicator ``ratings[u, i] >= threshold``.
    """

    def __init__(self, ratings: np.ndarray, threshold: float = 4.0, users=None,
                 t_max: int = T_MAX, seed: int = 0):
        self.ratings = np.asarray(ratings, dtype=np.float64)
        self.threshold = float(threshold)
        self.t_max = t_max
        self.users = np.arange(self.n_users) if users is None else np.unique(np.asarray(users))
        self.rng = np.random.default_rng(seed)
        self.states: dict[int, State] = {}
        self._clicks = self.ratings >= self.threshold

    @classmethod
    def from_model(cls, model: PreferenceModel, threshold: float = 4.0, users=None, seed: int = 0):
        return cls(model.predict_matrix(), threshold, users, seed=seed)

    @property
    def n_users(self) -> int:
        return self.ratings.shape[0]

    @property
    def n_items(self) -> int:
        return self.ratings.shape[1]

    def reset(self, batch_size: int, rng: np.random.Generator | None = None) -> list[tuple[int, State]]:
        """Sample users uniformly without replacement and give each an empty state."""
        rng = self.rng if rng is None else rng
        if not 0 < batch_size <= len(self.users):
            raise ValidationError(f"batch size {batch_size} not in 1..{len(self.users)}")
        picked = rng.choice(self.users, size=batch_size, replace=False)
        self.states = {int(u): State() for u in picked}
        return [(int(u), State()) for u in picked]

    def step(self, user: int, action: int) -> tuple[int, float, State, bool]:
        if user not in self.states:
            raise ProtocolError(f"user {user} is not in the active batch")
        s = self.states[user]
        if len(s) >= self.t_max:
            raise ProtocolError(f"user {user}: episode already finished")
        if not 0 <= action < self.n_items:
            raise ValidationError(f"item {action} out of range")
        if action in s.items:
            raise ProtocolError(f"user {user}: item {action} was already recommended")
        fb = int(self._clicks[user, action])
        nxt = s.append(int(action), fb)
        self.states[user] = nxt
        return fb, float(fb), nxt, len(nxt) == self.t_max

    def oracle_return(self, user: int) -> float:
        """Best achievable clicks in one episode: min(T, #items at or above threshold)."""
        return float(min(self.t_max, int(self._clicks[user].sum())))
