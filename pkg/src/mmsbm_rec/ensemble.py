"""Multi-restart sampling and rating-distribution prediction.

EM lands in different local optima depending on its random start, so
predictions are made from an ensemble of independently seeded fits whose
predicted rating distributions are averaged.  Group indices are not aligned
across runs; only per-run predictions (and per-run cold-start vectors) are
ever combined.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, ModelParams, RatingScale
from .em import FitConfig, FitResult, fit

__all__ = [
    "Ensemble",
    "predict_distribution",
    "cold_start_vector",
    "ensemble_fit",
    "ensemble_predict",
    "ensemble_predict_many",
    "estimate",
]

logger = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("mode", "median", "mean")
COMBINE_MODES = ("average", "best")


def predict_distribution(params: ModelParams, theta_u: np.ndarray,
                         eta_i: np.ndarray) -> np.ndarray:
    """Rating distribution for one (user, item) pair of membership vectors.

    probs[r] = sum over (k, l) of theta_u[k] * eta_i[l] * p[k, l, r]; a
    convex combination of the group-pair distributions, so it sums to one.
    """
    theta_u = np.asarray(theta_u, dtype=np.float64)
    eta_i = np.asarray(eta_i, dtype=np.float64)
    if theta_u.shape != (params.n_user_groups,):
        raise ValueError(
            f"theta_u has shape {theta_u.shape}, "
            f"expected ({params.n_user_groups},)"
        )
    if eta_i.shape != (params.n_item_groups,):
        raise ValueError(
            f"eta_i has shape {eta_i.shape}, expected ({params.n_item_groups},)"
        )
    return np.einsum("k,l,kls->s", theta_u, eta_i, params.p)


def cold_start_vector(membership_rows: np.ndarray) -> np.ndarray:
    """Population-average membership vector for a node with no training data.

    The component-wise mean of simplex rows is itself on the simplex, so the
    result is a valid membership vector.
    """
    rows = np.asarray(membership_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("need at least one membership row")
    return rows.mean(axis=0)


@dataclass(frozen=True)
class Ensemble:
    """A set of independently seeded fits sharing one configuration."""

    runs: tuple[FitResult, ...]
    scale: RatingScale
    config: FitConfig
    combine: str = "average"

    def __post_init__(self):
        if len(self.runs) < 1:
            raise ValueError("an ensemble needs at least one run")
        if self.combine not in COMBINE_MODES:
            raise ValueError(f"combine must be one of {COMBINE_MODES}")
        first = self.runs[0].params
        for run in self.runs:
            q = run.params
            if (q.n_user_groups, q.n_item_groups, q.n_labels) != (
                first.n_user_groups, first.n_item_groups, first.n_labels,
            ):
                raise ValueError("ensemble runs disagree on group counts")
        if first.n_labels != self.scale.size:
            raise ValueError("ensemble scale does not match run parameters")

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def _active_runs(self) -> tuple[FitResult, ...]:
        if self.combine == "best":
            best = max(self.runs, key=lambda r: r.final_log_likelihood)
            return (best,)
        return self.runs


def ensemble_fit(dataset: Dataset, config: FitConfig, n_runs: int,
                 base_seed: int, workers: int = 1,
                 combine: str = "average") -> Ensemble:
    """Fit ``n_runs`` independent models seeded base_seed .. base_seed+n-1.

    Runs may execute concurrently (the EM kernels release the GIL); results
    are collected in seed order, so the outcome is identical for any worker
    count.  A failed run aborts the whole ensemble.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    configs = [replace(config, seed=base_seed + j) for j in range(n_runs)]
    if workers > 1 and n_runs > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = tuple(pool.map(lambda c: fit(dataset, c), configs))
    else:
        runs = tuple(fit(dataset, c) for c in configs)
    logger.info(
        "ensemble of %d runs: mean iterations %.1f, best loglik %.2f",
        n_runs,
        float(np.mean([r.iterations_run for r in runs])),
        max(r.final_log_likelihood for r in runs),
    )
    return Ensemble(runs=runs, scale=dataset.scale, config=config, combine=combine)


def ensemble_predict(ensemble: Ensemble, u: int | None, i: int | None) -> np.ndarray:
    """Averaged rating distribution for a (user, item) query.

    ``None`` marks a cold user or item; its membership vector is replaced,
    within each run, by that run's population average before predicting.
    """
    acc = np.zeros(ensemble.scale.size)
    runs = ensemble._active_runs()
    for run in runs:
        params = run.params
        theta_u = params.theta[u] if u is not None else cold_start_vector(params.theta)
        eta_i = params.eta[i] if i is not None else cold_start_vector(params.eta)
        acc += predict_distribution(params, theta_u, eta_i)
    return acc / len(runs)


def ensemble_predict_many(ensemble: Ensemble, user_idx: np.ndarray,
                          item_idx: np.ndarray) -> np.ndarray:
    """Vectorized :func:`ensemble_predict` over query arrays.

    Negative indices mark cold users/items.  Row ``q`` equals
    ``ensemble_predict(ensemble, user_idx[q] or None, item_idx[q] or None)``.
    """
    user_idx = np.asarray(user_idx, dtype=np.int64)
    item_idx = np.asarray(item_idx, dtype=np.int64)
    if user_idx.shape != item_idx.shape:
        raise ValueError("query arrays must have equal length")
    acc = np.zeros((len(user_idx), ensemble.scale.size))
    cold_u = user_idx < 0
    cold_i = item_idx < 0
    runs = ensemble._active_runs()
    for run in runs:
        params = run.params
        theta_rows = params.theta[np.maximum(user_idx, 0)]
        eta_rows = params.eta[np.maximum(item_idx, 0)]
        if cold_u.any():
            theta_rows[cold_u] = cold_start_vector(params.theta)
        if cold_i.any():
            eta_rows[cold_i] = cold_start_vector(params.eta)
        acc += np.einsum("qk,ql,kls->qs", theta_rows, eta_rows, params.p)
    return acc / len(runs)


def estimate(dist: np.ndarray, kind: str, scale: RatingScale):
    """Point prediction from a rating distribution.

    mode: label with the largest probability (ties to the lowest index);
    median: smallest label whose cumulative probability reaches 1/2;
    mean: probability-weighted average of the scale values, as a float.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (scale.size,):
        raise ValueError(f"distribution has shape {dist.shape}, scale size {scale.size}")
    if kind == "mode":
        return scale.labels[int(np.argmax(dist))]
    if kind == "median":
        cum = np.cumsum(dist)
        idx = int(np.searchsorted(cum, 0.5))
        return scale.labels[min(idx, scale.size - 1)]
    if kind == "mean":
        return float(np.dot(scale.values, dist))
    raise ValueError(f"estimator kind must be one of {ESTIMATOR_KINDS}, got {kind!r}")
