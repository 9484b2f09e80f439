"""Comparison algorithms: item-mean, item-item kNN, and biased MF.

All three emit real-valued predictions on the scale's numeric axis; exact-
match accuracy is computed by rounding them to the nearest scale value
(ties toward the lower value) via ``RatingScale.nearest_index``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

from .core import Dataset, RatingScale

__all__ = [
    "naive_predict",
    "ItemItemModel",
    "item_item_fit",
    "item_item_predict",
    "MFConfig",
    "MFModel",
    "mf_fit",
    "mf_predict",
    "mf_objective",
]

logger = logging.getLogger(__name__)


def naive_predict(dataset: Dataset, i: int | None, scale: RatingScale) -> float:
    """Mean observed rating value of item ``i``; global mean if unseen."""
    if i is None:
        return dataset.global_mean_value()
    users, ratings = dataset.item_neighbors(i)
    if len(users) == 0:
        return dataset.global_mean_value()
    return float(scale.values[ratings].mean())


@dataclass(frozen=True)
class ItemItemModel:
    """Per-item nearest neighbors under user-mean-adjusted cosine similarity.

    Neighbor lists hold only strictly positive similarities, sorted
    descending, at most ``k_neighbors`` long.  Items sharing no raters have
    similarity zero and therefore never appear in a list.
    """

    k_neighbors: int
    neighbor_items: tuple[np.ndarray, ...]
    neighbor_sims: tuple[np.ndarray, ...]
    user_means: np.ndarray


def item_item_fit(dataset: Dataset, k_neighbors: int = 50) -> ItemItemModel:
    """Compute adjusted-cosine similarities and keep the top neighbors.

    Each item's rating vector is centered by the rater's mean rating; the
    cosine uses co-raters in the numerator and full centered norms in the
    denominator.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be at least 1")
    values = dataset.rating_values()
    user_sums = np.bincount(dataset.users, weights=values,
                            minlength=dataset.n_users)
    user_means = user_sums / dataset.user_degrees
    centered = values - user_means[dataset.users]
    mat = sp.csr_matrix(
        (centered, (dataset.items, dataset.users)),
        shape=(dataset.n_items, dataset.n_users),
    )
    norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
    co = (mat @ mat.T).tocsr()

    neighbor_items: list[np.ndarray] = []
    neighbor_sims: list[np.ndarray] = []
    for i in range(dataset.n_items):
        lo, hi = co.indptr[i], co.indptr[i + 1]
        cols = co.indices[lo:hi]
        dots = co.data[lo:hi]
        keep = (cols != i) & (norms[cols] > 0.0)
        cols = cols[keep]
        sims = dots[keep]
        if norms[i] > 0.0 and len(cols) > 0:
            sims = sims / (norms[i] * norms[cols])
        else:
            sims = np.zeros(len(cols))
        pos = sims > 0.0
        cols, sims = cols[pos], sims[pos]
        if len(sims) > k_neighbors:
            top = np.argpartition(-sims, k_neighbors - 1)[:k_neighbors]
            cols, sims = cols[top], sims[top]
        order = np.lexsort((cols, -sims))
        neighbor_items.append(cols[order].astype(np.int64))
        neighbor_sims.append(sims[order])
    return ItemItemModel(
        k_neighbors=k_neighbors,
        neighbor_items=tuple(neighbor_items),
        neighbor_sims=tuple(neighbor_sims),
        user_means=user_means,
    )


def item_item_predict(model: ItemItemModel, dataset: Dataset,
                      u: int | None, i: int | None,
                      scale: RatingScale) -> float:
    """Similarity-weighted mean of the user's ratings on ``i``'s neighbors.

    Falls back to the item-mean prediction when the user rated none of the
    neighbors, or when either side of the query is cold.
    """
    if u is None or i is None:
        return naive_predict(dataset, i, scale)
    rated_items, rated_ratings = dataset.user_neighbors(u)
    nbr_items = model.neighbor_items[i]
    nbr_sims = model.neighbor_sims[i]
    if len(nbr_items) == 0 or len(rated_items) == 0:
        return naive_predict(dataset, i, scale)
    pos = np.searchsorted(rated_items, nbr_items)
    pos = np.clip(pos, 0, len(rated_items) - 1)
    hit = rated_items[pos] == nbr_items
    if not hit.any():
        return naive_predict(dataset, i, scale)
    sims = nbr_sims[hit]
    rated_values = scale.values[rated_ratings[pos[hit]]]
    weight = np.abs(sims).sum()
    if not weight > 0.0:
        return naive_predict(dataset, i, scale)
    return float(np.dot(sims, rated_values) / weight)


@dataclass(frozen=True)
class MFConfig:
    """Hyperparameters for the biased matrix-factorization baseline."""

    k_factors: int = 50
    learning_rate: float = 0.002
    reg_lambda: float = 0.02
    epochs: int = 100
    seed: int = 0
    init_scale: float = 0.01

    def validate(self) -> None:
        if self.k_factors < 1:
            raise ValueError("k_factors must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")


@dataclass(frozen=True)
class MFModel:
    """Biased low-rank model: value = mu + b_u + b_i + p_u . q_i."""

    config: MFConfig
    mu: float
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_biases: np.ndarray
    item_biases: np.ndarray


@njit(cache=True, nogil=True)
def _sgd_epoch(order, users, items, values, P, Q, bu, bi, mu, lr, lam):
    n_factors = P.shape[1]
    for t in range(order.shape[0]):
        e = order[t]
        u = users[e]
        i = items[e]
        pred = mu + bu[u] + bi[i]
        for f in range(n_factors):
            pred += P[u, f] * Q[i, f]
        err = values[e] - pred
        bu[u] += lr * err
        bi[i] += lr * err
        for f in range(n_factors):
            puf = P[u, f]
            P[u, f] += lr * (err * Q[i, f] - lam * puf)
            Q[i, f] += lr * (err * puf - lam * Q[i, f])


@njit(cache=True, nogil=True)
def _mf_objective(users, items, values, P, Q, bu, bi, mu, lam):
    n_factors = P.shape[1]
    total = 0.0
    for e in range(users.shape[0]):
        u = users[e]
        i = items[e]
        pred = mu + bu[u] + bi[i]
        reg = 0.0
        for f in range(n_factors):
            pred += P[u, f] * Q[i, f]
            reg += P[u, f] * P[u, f] + Q[i, f] * Q[i, f]
        err = values[e] - pred
        total += err * err + lam * reg
    return total


def mf_objective(model: MFModel, dataset: Dataset) -> float:
    """Regularized squared error summed over observed ratings."""
    return float(_mf_objective(
        dataset.users, dataset.items, dataset.rating_values(),
        model.user_factors, model.item_factors,
        model.user_biases, model.item_biases,
        model.mu, model.config.reg_lambda,
    ))


def mf_fit(dataset: Dataset, config: MFConfig, scale: RatingScale) -> MFModel:
    """Train by SGD over the ratings in a seeded shuffled order per epoch.

    Factors start uniform in [-init_scale, init_scale], biases at zero, and
    ``mu`` at the training-set mean value.  Raises if the training objective
    blows past 1e6, which signals a diverging learning rate.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    P = rng.uniform(-config.init_scale, config.init_scale,
                    (dataset.n_users, config.k_factors))
    Q = rng.uniform(-config.init_scale, config.init_scale,
                    (dataset.n_items, config.k_factors))
    bu = np.zeros(dataset.n_users)
    bi = np.zeros(dataset.n_items)
    mu = dataset.global_mean_value()
    values = dataset.rating_values()
    for epoch in range(config.epochs):
        order = rng.permutation(dataset.n_ratings).astype(np.int64)
        _sgd_epoch(order, dataset.users, dataset.items, values,
                   P, Q, bu, bi, mu, config.learning_rate, config.reg_lambda)
        objective = _mf_objective(dataset.users, dataset.items, values,
                                  P, Q, bu, bi, mu, config.reg_lambda)
        if not np.isfinite(objective) or objective > 1e6:
            raise RuntimeError(
                f"MF training diverged at epoch {epoch}: objective {objective:.3g}"
            )
    return MFModel(config=config, mu=mu, user_factors=P, item_factors=Q,
                   user_biases=bu, item_biases=bi)


def mf_predict(model: MFModel, u: int | None, i: int | None,
               scale: RatingScale) -> float:
    """Biased inner product, clamped to the scale's numeric range.

    Cold users/items contribute zero factors and zero bias, so a fully cold
    query predicts the global mean.
    """
    pred = model.mu
    if u is not None:
        pred += model.user_biases[u]
    if i is not None:
        pred += model.item_biases[i]
    if u is not None and i is not None:
        pred += float(np.dot(model.user_factors[u], model.item_factors[i]))
    return float(np.clip(pred, scale.values[0], scale.values[-1]))
