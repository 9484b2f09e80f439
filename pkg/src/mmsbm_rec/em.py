"""Expectation-maximization for the mixed-membership rating model.

One EM iteration makes a single fused pass over the observed ratings: for
each rating the responsibility matrix over (user group, item group) pairs is
computed and immediately accumulated into the three update numerators, so no
per-rating responsibilities are ever stored.  Memory stays at
O(N*K + M*L + K*L*|S|) and per-iteration time at O(|ratings|*K*L).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Dataset, ModelParams, RatingScale

__all__ = [
    "DegenerateSupportError",
    "FitConfig",
    "FitResult",
    "init_params",
    "responsibility",
    "em_step",
    "log_likelihood",
    "fit",
]

logger = logging.getLogger(__name__)


class DegenerateSupportError(RuntimeError):
    """Some observed rating has zero probability under the parameters."""


@dataclass(frozen=True)
class FitConfig:
    """Settings for a single EM fit."""

    n_user_groups: int = 10
    n_item_groups: int = 10
    max_iterations: int = 400
    tol: float = 1e-6
    seed: int = 0
    prob_floor: float = 1e-12

    def validate(self, n_labels: int | None = None) -> None:
        if self.n_user_groups < 1 or self.n_item_groups < 1:
            raise ValueError("group counts must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.prob_floor < 0:
            raise ValueError("prob_floor must be nonnegative")
        if n_labels is not None and self.prob_floor >= 1.0 / n_labels:
            raise ValueError(
                f"prob_floor {self.prob_floor} too large for {n_labels} labels"
            )


@dataclass(frozen=True)
class FitResult:
    """Converged (or iteration-capped) parameters plus the likelihood trace.

    ``log_likelihood_trace[t]`` is the log-likelihood of the parameter
    iterate after ``t`` update steps, so the trace has ``iterations_run + 1``
    entries and is non-decreasing up to floating-point noise.
    """

    params: ModelParams
    log_likelihood_trace: np.ndarray
    iterations_run: int
    converged: bool
    seed: int

    @property
    def final_log_likelihood(self) -> float:
        return float(self.log_likelihood_trace[-1])


@njit(cache=True, nogil=True)
def _fused_pass(users, items, ratings, theta, eta, p,
                theta_num, eta_num, p_num, scratch):
    """Accumulate update numerators; returns log-likelihood of the inputs.

    Returns NaN if any rating has nonpositive probability, in which case the
    accumulators are meaningless.
    """
    n = users.shape[0]
    n_ug = theta.shape[1]
    n_ig = eta.shape[1]
    total = 0.0
    for e in range(n):
        u = users[e]
        i = items[e]
        r = ratings[e]
        denom = 0.0
        for k in range(n_ug):
            tu = theta[u, k]
            for l in range(n_ig):
                w = tu * eta[i, l] * p[k, l, r]
                scratch[k, l] = w
                denom += w
        if not denom > 0.0:
            return np.nan
        total += np.log(denom)
        # true division keeps single-term responsibilities exactly 1.0
        for k in range(n_ug):
            row = 0.0
            for l in range(n_ig):
                w = scratch[k, l] / denom
                row += w
                eta_num[i, l] += w
                p_num[k, l, r] += w
            theta_num[u, k] += row
    return total


@njit(cache=True, nogil=True)
def _loglik_pass(users, items, ratings, theta, eta, p):
    """Log-likelihood of the observed ratings; NaN on degenerate support."""
    n = users.shape[0]
    n_ug = theta.shape[1]
    n_ig = eta.shape[1]
    total = 0.0
    for e in range(n):
        u = users[e]
        i = items[e]
        r = ratings[e]
        denom = 0.0
        for k in range(n_ug):
            tu = theta[u, k]
            for l in range(n_ig):
                denom += tu * eta[i, l] * p[k, l, r]
        if not denom > 0.0:
            return np.nan
        total += np.log(denom)
    return total


def init_params(config: FitConfig, n_users: int, n_items: int,
                scale: RatingScale) -> ModelParams:
    """Random normalized starting point, deterministic in ``config.seed``.

    Each membership row and each rating distribution is an independent
    uniform draw normalized to sum to one.
    """
    config.validate(scale.size)
    rng = np.random.default_rng(config.seed)
    theta = rng.random((n_users, config.n_user_groups))
    theta /= theta.sum(axis=1, keepdims=True)
    eta = rng.random((n_items, config.n_item_groups))
    eta /= eta.sum(axis=1, keepdims=True)
    p = rng.random((config.n_user_groups, config.n_item_groups, scale.size))
    p /= p.sum(axis=2, keepdims=True)
    return ModelParams(theta=theta, eta=eta, p=p)


def responsibility(params: ModelParams, u: int, i: int, r: int) -> np.ndarray:
    """Posterior over (user group, item group) for one observed rating.

    Entries are theta[u,k] * eta[i,l] * p[k,l,r] normalized over all (k,l);
    they sum to one.
    """
    w = params.theta[u][:, None] * params.eta[i][None, :] * params.p[:, :, r]
    denom = w.sum()
    if not denom > 0.0:
        raise DegenerateSupportError(
            f"rating index {r} for user {u}, item {i} has zero probability"
        )
    return w / denom


def _finalize_step(dataset: Dataset, theta_num, eta_num, p_num,
                   prob_floor: float) -> ModelParams:
    theta = theta_num / dataset.user_degrees[:, None]
    eta = eta_num / dataset.item_degrees[:, None]
    totals = p_num.sum(axis=2, keepdims=True)
    n_labels = p_num.shape[2]
    safe = np.where(totals > 0.0, totals, 1.0)
    p = np.where(totals > 0.0, p_num / safe, 1.0 / n_labels)
    if prob_floor > 0.0:
        p = np.maximum(p, prob_floor)
        p /= p.sum(axis=2, keepdims=True)
    return ModelParams(theta=theta, eta=eta, p=p)


def _em_pass(params: ModelParams, dataset: Dataset,
             prob_floor: float) -> tuple[ModelParams, float]:
    """One fused E+M pass; returns (updated params, log-lik of input params)."""
    theta_num = np.zeros_like(params.theta)
    eta_num = np.zeros_like(params.eta)
    p_num = np.zeros_like(params.p)
    scratch = np.empty((params.n_user_groups, params.n_item_groups))
    loglik = _fused_pass(
        dataset.users, dataset.items, dataset.ratings,
        params.theta, params.eta, params.p,
        theta_num, eta_num, p_num, scratch,
    )
    if math.isnan(loglik):
        raise DegenerateSupportError(
            "an observed rating has zero probability; "
            "use a positive prob_floor to keep the support full"
        )
    return _finalize_step(dataset, theta_num, eta_num, p_num, prob_floor), loglik


def em_step(params: ModelParams, dataset: Dataset,
            prob_floor: float = 1e-12) -> ModelParams:
    """One EM update of all parameters, computed from the input parameters.

    Membership rows are degree-normalized responsibility sums; rating
    distributions are responsibility-weighted rating frequencies, floored at
    ``prob_floor`` and renormalized.
    """
    new_params, _ = _em_pass(params, dataset, prob_floor)
    return new_params


def log_likelihood(params: ModelParams, dataset: Dataset) -> float:
    """Log-probability of all observed ratings under the model; always <= 0."""
    value = _loglik_pass(
        dataset.users, dataset.items, dataset.ratings,
        params.theta, params.eta, params.p,
    )
    if math.isnan(value):
        raise DegenerateSupportError(
            "an observed rating has zero probability under these parameters"
        )
    return float(value)


def fit(dataset: Dataset, config: FitConfig) -> FitResult:
    """Iterate EM from a seeded random start until the likelihood stalls.

    Stops when the relative log-likelihood change drops below ``config.tol``
    or after ``config.max_iterations`` updates.  Deterministic in the seed.
    """
    config.validate(dataset.scale.size)
    params = init_params(config, dataset.n_users, dataset.n_items, dataset.scale)
    trace: list[float] = []
    converged = False
    iterations = 0
    for _ in range(config.max_iterations):
        params, loglik = _em_pass(params, dataset, config.prob_floor)
        trace.append(loglik)
        iterations += 1
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < config.tol * abs(trace[-2]):
            converged = True
            break
    trace.append(log_likelihood(params, dataset))
    logger.debug(
        "fit seed=%d: %d iterations, converged=%s, loglik=%.6f",
        config.seed, iterations, converged, trace[-1],
    )
    return FitResult(
        params=params,
        log_likelihood_trace=np.asarray(trace),
        iterations_run=iterations,
        converged=converged,
        seed=config.seed,
    )
