"""Rating alphabets, sparse rating datasets, and model parameter containers.

The model treats ratings as symbols from a finite ordered alphabet; numeric
values are attached to the labels only for error metrics and the mean
estimator.  Everything here is immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "RatingScale",
    "Dataset",
    "ModelParams",
    "scale_from_labels",
    "scale_from_values",
    "scale_from_spec",
    "dataset_from_triples",
    "validate_params",
]


def _readonly(a: np.ndarray, dtype=None) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    if out is a:
        out = a.copy()
    out.setflags(write=False)
    return out


def _canonical_token(label) -> str:
    """Canonical string form of a label: numeric labels lose trailing zeros."""
    if isinstance(label, str):
        return label.strip()
    if isinstance(label, (bool, np.bool_)):
        return str(label)
    try:
        return format(float(label), "g")
    except (TypeError, ValueError):
        return str(label)


@dataclass(frozen=True, eq=False)
class RatingScale:
    """Ordered finite alphabet of rating labels with one numeric value each.

    ``labels`` are arbitrary hashable symbols (ints, floats, strings, ...).
    ``values`` are strictly increasing floats aligned with the labels; they
    are used only where a number is genuinely needed (MAE, mean estimator,
    nearest-value rounding).
    """

    labels: tuple
    values: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values, np.float64))
        index: dict = {}
        for pos, lab in enumerate(self.labels):
            index[lab] = pos
            index.setdefault(_canonical_token(lab), pos)
        for pos, val in enumerate(self.values):
            index.setdefault(_canonical_token(val), pos)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index_of(self, label) -> int:
        """Index of an exact label; raises ValueError for unknown labels."""
        try:
            return self._index[label]
        except (KeyError, TypeError):
            raise ValueError(f"unknown rating label {label!r}") from None

    def resolve(self, token) -> int:
        """Index for a label or an equivalent numeric token ("3", 3, 3.0)."""
        try:
            return self._index[token]
        except (KeyError, TypeError):
            pass
        try:
            canon = _canonical_token(token)
            return self._index[canon]
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"unknown rating label {token!r}") from None

    def value_of(self, index: int) -> float:
        return float(self.values[index])

    def canonical_label(self, index: int) -> str:
        return _canonical_token(self.labels[index])

    def nearest_index(self, value: float) -> int:
        """Index of the scale value closest to ``value``; ties go down."""
        values = self.values
        pos = int(np.searchsorted(values, value))
        if pos <= 0:
            return 0
        if pos >= len(values):
            return len(values) - 1
        below, above = values[pos - 1], values[pos]
        return pos - 1 if value - below <= above - value else pos

    def nearest_indices(self, values: Sequence[float]) -> np.ndarray:
        """Vectorized :meth:`nearest_index` over an array of values."""
        x = np.asarray(values, dtype=np.float64)
        pos = np.searchsorted(self.values, x)
        pos = np.clip(pos, 1, len(self.values) - 1)
        below = self.values[pos - 1]
        above = self.values[pos]
        take_below = (x - below <= above - x)
        out = np.where(take_below, pos - 1, pos)
        out[x <= self.values[0]] = 0
        out[x >= self.values[-1]] = len(self.values) - 1
        return out.astype(np.int64)


def scale_from_labels(labels: Sequence, values: Sequence[float]) -> RatingScale:
    """Build a rating scale from aligned label and numeric-value sequences."""
    labels = tuple(labels)
    values = np.asarray(values, dtype=np.float64)
    if len(labels) != len(values):
        raise ValueError(
            f"{len(labels)} labels but {len(values)} values"
        )
    if len(labels) < 2:
        raise ValueError("a rating scale needs at least two labels")
    seen: dict = {}
    for lab in labels:
        canon = _canonical_token(lab)
        if lab in seen or canon in seen:
            raise ValueError(f"duplicate rating label {lab!r}")
        seen[lab] = True
        seen[canon] = True
    if not np.all(np.diff(values) > 0):
        raise ValueError("scale values must be strictly increasing")
    return RatingScale(labels=labels, values=values)


def scale_from_values(values: Sequence[float]) -> RatingScale:
    """Scale whose labels are the canonical tokens of its numeric values."""
    values = np.asarray(values, dtype=np.float64)
    return scale_from_labels(tuple(_canonical_token(v) for v in values), values)


def scale_from_spec(spec: str) -> RatingScale:
    """Parse a scale description: "1,2,3,4,5" or "start:stop:step" (inclusive)."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad scale range {spec!r}, expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad scale range {spec!r}")
        n = int(round((stop - start) / step)) + 1
        values = start + step * np.arange(n)
    else:
        values = np.asarray([float(tok) for tok in spec.split(",") if tok.strip()])
    return scale_from_values(values)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable sparse store of observed ratings on a bipartite graph.

    Ratings are triples (user index, item index, rating index) over densely
    re-indexed users and items; ``user_ids``/``item_ids`` map indices back to
    the external identifiers they were built from.  Per-node adjacency is
    kept in CSR form so neighborhoods can be sliced without scanning.
    """

    scale: RatingScale
    user_ids: tuple
    item_ids: tuple
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    user_index: Mapping = field(repr=False, default=None)
    item_index: Mapping = field(repr=False, default=None)
    user_degrees: np.ndarray = field(init=False, repr=False, default=None)
    item_degrees: np.ndarray = field(init=False, repr=False, default=None)
    _user_ptr: np.ndarray = field(init=False, repr=False, default=None)
    _user_order: np.ndarray = field(init=False, repr=False, default=None)
    _item_ptr: np.ndarray = field(init=False, repr=False, default=None)
    _item_order: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        users = _readonly(self.users, np.int32)
        items = _readonly(self.items, np.int32)
        ratings = _readonly(self.ratings, np.int32)
        if not (users.ndim == items.ndim == ratings.ndim == 1):
            raise ValueError("rating arrays must be one-dimensional")
        if not (len(users) == len(items) == len(ratings)):
            raise ValueError("rating arrays must have equal length")
        if len(users) == 0:
            raise ValueError("dataset contains no ratings")
        n_users, n_items = len(self.user_ids), len(self.item_ids)
        if users.min() < 0 or users.max() >= n_users:
            raise ValueError("user index out of range")
        if items.min() < 0 or items.max() >= n_items:
            raise ValueError("item index out of range")
        if ratings.min() < 0 or ratings.max() >= self.scale.size:
            raise ValueError("rating index out of range for the scale")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)

        pair_codes = users.astype(np.int64) * n_items + items
        uniq, counts = np.unique(pair_codes, return_counts=True)
        if len(uniq) != len(pair_codes):
            code = uniq[np.argmax(counts)]
            u, i = divmod(int(code), n_items)
            raise ValueError(
                f"duplicate rating for user {self.user_ids[u]!r}, "
                f"item {self.item_ids[i]!r}"
            )

        if self.user_index is None:
            object.__setattr__(
                self,
                "user_index",
                MappingProxyType({uid: j for j, uid in enumerate(self.user_ids)}),
            )
        if self.item_index is None:
            object.__setattr__(
                self,
                "item_index",
                MappingProxyType({iid: j for j, iid in enumerate(self.item_ids)}),
            )

        user_degrees = np.bincount(users, minlength=n_users)
        item_degrees = np.bincount(items, minlength=n_items)
        object.__setattr__(self, "user_degrees", _readonly(user_degrees, np.int64))
        object.__setattr__(self, "item_degrees", _readonly(item_degrees, np.int64))

        # CSR adjacency; within a node, neighbors sorted by opposite index.
        user_order = np.lexsort((items, users)).astype(np.int64)
        item_order = np.lexsort((users, items)).astype(np.int64)
        user_ptr = np.zeros(n_users + 1, dtype=np.int64)
        np.cumsum(user_degrees, out=user_ptr[1:])
        item_ptr = np.zeros(n_items + 1, dtype=np.int64)
        np.cumsum(item_degrees, out=item_ptr[1:])
        object.__setattr__(self, "_user_order", _readonly(user_order))
        object.__setattr__(self, "_item_order", _readonly(item_order))
        object.__setattr__(self, "_user_ptr", _readonly(user_ptr))
        object.__setattr__(self, "_item_ptr", _readonly(item_ptr))

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_ratings(self) -> int:
        return len(self.users)

    def user_neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Items rated by user ``u`` (sorted by item index) and their ratings."""
        sl = self._user_order[self._user_ptr[u] : self._user_ptr[u + 1]]
        return self.items[sl], self.ratings[sl]

    def item_neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Users who rated item ``i`` (sorted by user index) and their ratings."""
        sl = self._item_order[self._item_ptr[i] : self._item_ptr[i + 1]]
        return self.users[sl], self.ratings[sl]

    def rating_values(self) -> np.ndarray:
        """Numeric value of every observed rating, aligned with ``ratings``."""
        return self.scale.values[self.ratings]

    def global_mean_value(self) -> float:
        return float(self.rating_values().mean())

    def triples(self) -> Iterator[tuple]:
        """Yield ratings as (external user id, external item id, label)."""
        for u, i, r in zip(self.users, self.items, self.ratings):
            yield self.user_ids[u], self.item_ids[i], self.scale.labels[r]

    def subset(self, rating_indices: Sequence[int]) -> "Dataset":
        """New dataset from a subset of rating positions, densely re-indexed.

        Users and items that lose all their ratings are dropped; surviving
        ones keep their external ids.
        """
        idx = np.asarray(rating_indices, dtype=np.int64)
        sub_users = self.users[idx]
        sub_items = self.items[idx]
        sub_ratings = self.ratings[idx]
        kept_users, new_users = np.unique(sub_users, return_inverse=True)
        kept_items, new_items = np.unique(sub_items, return_inverse=True)
        return Dataset(
            scale=self.scale,
            user_ids=tuple(self.user_ids[j] for j in kept_users),
            item_ids=tuple(self.item_ids[j] for j in kept_items),
            users=new_users.astype(np.int32),
            items=new_items.astype(np.int32),
            ratings=sub_ratings,
        )


def dataset_from_triples(triples: Iterable[tuple], scale: RatingScale) -> Dataset:
    """Build a dataset from (user id, item id, label) triples.

    External ids may be any hashable values; they are re-indexed densely in
    first-appearance order.  A (user, item) pair occurring twice is an error
    rather than a silent overwrite.
    """
    user_index: dict = {}
    item_index: dict = {}
    users: list[int] = []
    items: list[int] = []
    ratings: list[int] = []
    for triple in triples:
        try:
            uid, iid, label = triple
        except (TypeError, ValueError):
            raise ValueError(f"expected (user, item, label) triple, got {triple!r}")
        u = user_index.setdefault(uid, len(user_index))
        i = item_index.setdefault(iid, len(item_index))
        users.append(u)
        items.append(i)
        ratings.append(scale.resolve(label))
    if not users:
        raise ValueError("no ratings supplied")
    return Dataset(
        scale=scale,
        user_ids=tuple(user_index),
        item_ids=tuple(item_index),
        users=np.asarray(users, dtype=np.int32),
        items=np.asarray(items, dtype=np.int32),
        ratings=np.asarray(ratings, dtype=np.int32),
        user_index=MappingProxyType(user_index),
        item_index=MappingProxyType(item_index),
    )


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Group memberships and per-group-pair rating distributions.

    ``theta[u, k]`` is how much user ``u`` belongs to user group ``k``;
    ``eta[i, l]`` likewise for items; ``p[k, l, r]`` is the probability that
    a pure-``k`` user gives a pure-``l`` item the rating with index ``r``.
    Rows of ``theta`` and ``eta`` and every ``p[k, l]`` are probability
    vectors.
    """

    theta: np.ndarray
    eta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        theta = _readonly(self.theta, np.float64)
        eta = _readonly(self.eta, np.float64)
        p = _readonly(self.p, np.float64)
        if theta.ndim != 2 or eta.ndim != 2 or p.ndim != 3:
            raise ValueError("theta/eta must be 2-d and p 3-d")
        if p.shape[0] != theta.shape[1] or p.shape[1] != eta.shape[1]:
            raise ValueError(
                f"p has shape {p.shape}, incompatible with "
                f"theta {theta.shape} and eta {eta.shape}"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "p", p)

    @property
    def n_users(self) -> int:
        return self.theta.shape[0]

    @property
    def n_items(self) -> int:
        return self.eta.shape[0]

    @property
    def n_user_groups(self) -> int:
        return self.theta.shape[1]

    @property
    def n_item_groups(self) -> int:
        return self.eta.shape[1]

    @property
    def n_labels(self) -> int:
        return self.p.shape[2]


def _check_rows(name: str, rows: np.ndarray, tol: float, out: list[str]) -> None:
    sums = rows.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > tol)
    for where in bad[:5]:
        key = ", ".join(str(int(j)) for j in where)
        out.append(f"{name}[{key}] sums to {sums[tuple(where)]:.12g}")
    if len(bad) > 5:
        out.append(f"{name}: {len(bad) - 5} further row-sum violations")
    lo, hi = rows.min(), rows.max()
    if lo < -tol:
        out.append(f"{name} has entry {lo:.12g} below 0")
    if hi > 1.0 + tol:
        out.append(f"{name} has entry {hi:.12g} above 1")


def validate_params(params: ModelParams, tol: float = 1e-9) -> list[str]:
    """Check normalization and range invariants; returns violation messages.

    Empty result means every membership row and every rating distribution
    sums to 1 within ``tol`` and all entries lie in [-tol, 1 + tol].
    """
    violations: list[str] = []
    _check_rows("theta", params.theta, tol, violations)
    _check_rows("eta", params.eta, tol, violations)
    _check_rows("p", params.p, tol, violations)
    return violations
