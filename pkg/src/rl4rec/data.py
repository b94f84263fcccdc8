"""Rating datasets: Yahoo! R3 / Coat loaders, a biased synthetic generator, splits.

File formats
------------
``yahoo_r3``
    One record per line, ``user item rating`` separated by any whitespace,
    1-based ids, ratings 1..5. Blank lines are ignored.
``coat``
    Dense integer matrix, one user per line, ``n_items`` whitespace-separated
    ratings per line, ``0`` meaning unobserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ParseError, ValidationError

KNOWN_DIMS = {"yahoo_r3": (15_400, 1_000), "coat": (290, 300)}
FORMATS = tuple(KNOWN_DIMS)


class RatingRecord(NamedTuple):
    user: int
    item: int
    rating: int


@dataclass(frozen=True)
class Ratings:
    """Column-wise rating records plus a provenance tag ("biased" or "mcar")."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    provenance: str = "biased"

    def __post_init__(self):
        for name in ("users", "items", "ratings"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if not (len(self.users) == len(self.items) == len(self.ratings)):
            raise ValidationError("ratings columns differ in length")

    def __len__(self):
        return len(self.users)

    def __iter__(self) -> Iterator[RatingRecord]:
        for u, i, r in zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()):
            yield RatingRecord(u, i, r)

    @classmethod
    def from_records(cls, records, provenance: str = "biased") -> "Ratings":
        arr = np.array([tuple(r) for r in records], dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], provenance)

    def subset(self, idx, provenance: str | None = None) -> "Ratings":
        return Ratings(self.users[idx], self.items[idx], self.ratings[idx],
                       self.provenance if provenance is None else provenance)

    def as_set(self) -> set:
        return set(zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()))

    def validate(self, n_users: int, n_items: int, where: str = ""):
        if len(self) == 0:
            return
        if self.users.min() < 0 or self.users.max() >= n_users:
            raise ValidationError(f"{where}user id out of range [0, {n_users})")
        if self.items.min() < 0 or self.items.max() >= n_items:
            raise ValidationError(f"{where}item id out of range [0, {n_items})")
        if self.ratings.min() < 1 or self.ratings.max() > 5:
            raise ValidationError(f"{where}rating outside 1..5")
        keys = self.users * n_items + self.items
        if len(np.unique(keys)) != len(keys):
            raise ValidationError(f"{where}duplicate (user, item) pair")


@dataclass(frozen=True)
class Dataset:
    name: str
    n_users: int
    n_items: int
    train: Ratings
    test: Ratings

    def __post_init__(self):
        self.train.validate(self.n_users, self.n_items, "train: ")
        self.test.validate(self.n_users, self.n_items, "test: ")


def _parse_triples(path: Path) -> Ratings:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 'user item rating', got {line.strip()!r}")
            try:
                u, i, r = (int(p) for p in parts)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer field in {line.strip()!r}") from None
            if u < 1 or i < 1:
                raise ParseError(f"{path}:{lineno}: ids are 1-based, got {line.strip()!r}")
            if not 1 <= r <= 5:
                raise ParseError(f"{path}:{lineno}: rating {r} outside 1..5")
            rows.append((u - 1, i - 1, r))
    return Ratings.from_records(rows)


def _parse_matrix(path: Path, n_users: int, n_items: int) -> Ratings:
    users, items, ratings = [], [], []
    row = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                vals = np.array([int(p) for p in parts], dtype=np.int64)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer entry") from None
            if len(vals) != n_items:
                raise ValidationError(f"{path}:{lineno}: expected {n_items} columns, got {len(vals)}")
            if vals.min() < 0 or vals.max() > 5:
                raise ParseError(f"{path}:{lineno}: rating outside 0..5")
            nz = np.flatnonzero(vals)
            users.append(np.full(len(nz), row))
            items.append(nz)
            ratings.append(vals[nz])
            row += 1
    if row != n_users:
        raise ValidationError(f"{path}: expected {n_users} rows, got {row}")
    cat = (lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64))
    return Ratings(cat(users), cat(items), cat(ratings))


def load_dataset(train_path, test_path, fmt: str, n_users: int | None = None,
                 n_items: int | None = None) -> Dataset:
    """Load a biased train split and an MCAR test split.

    Dimensions default to the published sizes of the format; ids outside them
    are a validation error.
    """
    if fmt not in KNOWN_DIMS:
        raise ValidationError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    du, di = KNOWN_DIMS[fmt]
    n_users = du if n_users is None else n_users
    n_items = di if n_items is None else n_items
    paths = [Path(train_path), Path(test_path)]
    for p in paths:
        if not p.is_file():
            raise ValidationError(f"dataset file not found: {p}")
    if fmt == "yahoo_r3":
        train, test = (_parse_triples(p) for p in paths)
    else:
        train, test = (_parse_matrix(p, n_users, n_items) for p in paths)
    train = Ratings(train.users, train.items, train.ratings, "biased")
    test = Ratings(test.users, test.items, test.ratings, "mcar")
    return Dataset(fmt, n_users, n_items, train, test)


def _write(ratings: Ratings, path: Path, fmt: str, n_users: int, n_items: int):
    with open(path, "w") as fh:
        if fmt == "yahoo_r3":
            order = np.lexsort((ratings.items, ratings.users))
            for k in order:
                fh.write(f"{ratings.users[k] + 1}\t{ratings.items[k] + 1}\t{ratings.ratings[k]}\n")
        else:
            M = np.zeros((n_users, n_items), dtype=np.int64)
            M[ratings.users, ratings.items] = ratings.ratings
            for row in M:
                fh.write(" ".join(map(str, row.tolist())) + "\n")


def save_dataset(ds: Dataset, train_path, test_path, fmt: str | None = None):
    fmt = fmt or ds.name
    if fmt not in KNOWN_DIMS:
        raise ValidationError(f"unknown dataset format {fmt!r}")
    _write(ds.train, Path(train_path), fmt, ds.n_users, ds.n_items)
    _write(ds.test, Path(test_path), fmt, ds.n_users, ds.n_items)


@dataclass(frozen=True)
class SynthData:
    dataset: Dataset
    true_ratings: np.ndarray      # (n_users, n_items) ints 1..5
    propensities: np.ndarray      # (n_users, n_items) observation probabilities
    item_rank: np.ndarray = field(repr=False, default=None)  # popularity rank per item, 0 = most popular


def synth_biased(n_users: int, n_items: int, k_true: int = 4, skew: float = 1.0, seed: int = 0,
                 density: float = 0.05, mcar_per_user: int = 5, positivity: float = 2.0) -> SynthData:
    """Low-rank ratings with popularity-biased observation.

    True ratings are a seeded low-rank score quantised to 1..5. Items are
    ranked by their true mean rating and given Zipf popularity ``1/rank``.
    A user-item pair's popularity is the item's times ``positivity**(y - 5)``
    (well-liked items get rated more), and its observation probability is
    proportional to ``popularity**skew``, scaled to the target density and
    clipped at 1. ``skew=0`` is MCAR; ``positivity=1`` leaves item popularity
    only. The test split samples ``mcar_per_user`` items per user uniformly.
    """
    if min(n_users, n_items, k_true) <= 0 or skew < 0:
        raise ValidationError("synth_biased parameters must be positive")
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n_users, k_true))
    V = rng.normal(size=(n_items, k_true))
    item_bias = rng.normal(0.0, 0.8, n_items)
    user_bias = rng.normal(0.0, 0.4, n_users)
    score = 3.0 + item_bias[None, :] + user_bias[:, None] + 0.8 * (U @ V.T) / np.sqrt(k_true)
    truth = np.clip(np.rint(score), 1, 5).astype(np.int64)

    order = np.lexsort((np.arange(n_items), -truth.mean(axis=0)))
    rank = np.empty(n_items, dtype=np.int64)
    rank[order] = np.arange(n_items)
    pop = (1.0 / (rank + 1.0))[None, :] * float(positivity) ** (truth - 5.0)
    pop = pop ** skew
    P = np.clip(pop * density / pop.mean(), 0.0, 1.0)

    observed = rng.random((n_users, n_items)) < P
    uo, io = np.nonzero(observed)
    train = Ratings(uo, io, truth[uo, io], "biased")

    m = min(mcar_per_user, n_items)
    tu, ti = [], []
    for u in range(n_users):
        tu.append(np.full(m, u))
        ti.append(rng.choice(n_items, size=m, replace=False))
    tu, ti = np.concatenate(tu), np.concatenate(ti)
    test = Ratings(tu, ti, truth[tu, ti], "mcar")
    ds = Dataset("synthetic", n_users, n_items, train, test)
    return SynthData(ds, truth, P, rank)


def split_holdout(records: Ratings, fraction: float, seed: int) -> tuple[Ratings, Ratings]:
    """Seeded uniform partition; the holdout gets floor(fraction * n) records."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(records)
    n_hold = int(np.floor(fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    hold = np.sort(perm[:n_hold])
    fit = np.sort(perm[n_hold:])
    return records.subset(fit), records.subset(hold)
