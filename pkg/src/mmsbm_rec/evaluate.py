"""Cross-validation, accuracy/MAE metrics, and the linear-scaling benchmark.

Splits are by rating (link): each fold holds out a subset of the observed
ratings and trains on the rest.  Test links whose user or item is absent
from the training fold are cold-start cases; they still get predictions via
the population-average membership path (or each baseline's fallback) and are
reported both pooled into the fold metrics and separately.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .baselines import (
    MFConfig, item_item_fit, item_item_predict, mf_fit, mf_predict,
    naive_predict,
)
from .core import Dataset, RatingScale
from .em import FitConfig, em_step, init_params
from .ensemble import Ensemble, ensemble_fit, ensemble_predict_many

__all__ = [
    "FoldSplit",
    "EvalConfig",
    "MethodFoldResult",
    "EvalReport",
    "MMSBM_METHOD",
    "METHOD_NAMES",
    "kfold_split",
    "accuracy",
    "mae",
    "predict_links_mmsbm",
    "cross_validate",
    "evaluate_methods",
    "ScalingPoint",
    "scaling_benchmark",
]

logger = logging.getLogger(__name__)

MMSBM_METHOD = "mmsbm"
METHOD_NAMES = (MMSBM_METHOD, "naive", "item-item", "mf")
_METHOD_ALIASES = {"mmsbm-ensemble": MMSBM_METHOD}


@dataclass(frozen=True)
class FoldSplit:
    """Disjoint rating-index folds covering the whole dataset."""

    folds: tuple[np.ndarray, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)


def kfold_split(dataset: Dataset, k: int, seed: int) -> FoldSplit:
    """Seeded uniform partition of rating indices into k near-equal folds."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > dataset.n_ratings:
        raise ValueError(f"cannot split {dataset.n_ratings} ratings into {k} folds")
    perm = np.random.default_rng(seed).permutation(dataset.n_ratings)
    return FoldSplit(folds=tuple(np.array_split(perm, k)), seed=seed)


def accuracy(predicted: Sequence, actual: Sequence) -> float:
    """Fraction of exactly matching labels."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise ValueError("predicted and actual must be equal-length, nonempty")
    return float(np.mean(predicted == actual))


def mae(predicted: Sequence[float], actual: Sequence, scale: RatingScale) -> float:
    """Mean absolute error on the scale's numeric axis.

    ``predicted`` are real values; ``actual`` are label indices into the
    scale.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    actual_values = scale.values[np.asarray(actual)]
    if predicted.shape != actual_values.shape or predicted.size == 0:
        raise ValueError("predicted and actual must be equal-length, nonempty")
    return float(np.mean(np.abs(predicted - actual_values)))


@dataclass(frozen=True)
class EvalConfig:
    """Everything the method under evaluation needs.

    ``n_runs=500`` mirrors the reference sampling protocol; desk-scale runs
    usually pass something far smaller.
    """

    fit: FitConfig = field(default_factory=FitConfig)
    n_runs: int = 500
    base_seed: int = 0
    combine: str = "average"
    k_neighbors: int = 50
    mf: MFConfig = field(default_factory=MFConfig)
    workers: int = 1


@dataclass(frozen=True)
class MethodFoldResult:
    """Pooled and cold-start metrics for one method on one fold.

    For the block model, ``mae`` uses the median estimator (its best MAE
    estimator) and ``mode_mae`` carries the mode estimator's MAE for
    comparison; baselines leave ``mode_mae`` unset.
    """

    method: str
    fold: int
    n_test: int
    accuracy: float
    mae: float
    cold_count: int
    cold_accuracy: float | None
    cold_mae: float | None
    mode_mae: float | None = None


@dataclass(frozen=True)
class EvalReport:
    """Per-method, per-fold metrics with cross-fold summaries."""

    k: int
    seed: int
    rows: tuple[MethodFoldResult, ...]

    def methods(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.method, None)
        return tuple(seen)

    def method_rows(self, method: str) -> tuple[MethodFoldResult, ...]:
        return tuple(r for r in self.rows if r.method == method)

    def summary(self) -> dict[str, dict[str, float]]:
        """Mean and standard error of the mean across folds, per method."""
        out: dict[str, dict[str, float]] = {}
        for method in self.methods():
            rows = self.method_rows(method)
            acc = np.array([r.accuracy for r in rows])
            err = np.array([r.mae for r in rows])
            cold = np.array([r.cold_count for r in rows], dtype=np.float64)
            n_test = np.array([r.n_test for r in rows], dtype=np.float64)
            out[method] = {
                "accuracy_mean": float(acc.mean()),
                "accuracy_sem": _sem(acc),
                "mae_mean": float(err.mean()),
                "mae_sem": _sem(err),
                "cold_fraction": float(cold.sum() / n_test.sum()),
            }
        return out

    def merged_with(self, other: "EvalReport") -> "EvalReport":
        if (self.k, self.seed) != (other.k, other.seed):
            raise ValueError("cannot merge reports from different splits")
        return EvalReport(k=self.k, seed=self.seed, rows=self.rows + other.rows)


def _sem(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(x.std(ddof=1) / np.sqrt(len(x)))


def predict_links_mmsbm(
    train: Dataset,
    users_ext: Sequence,
    items_ext: Sequence,
    config: EvalConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, Ensemble]:
    """Ensemble predictions for external (user, item) queries.

    Unknown ids take the cold-start path.  Returns (mode label indices,
    median values, distributions, ensemble).
    """
    ensemble = ensemble_fit(
        train, config.fit, config.n_runs, config.base_seed,
        workers=config.workers, combine=config.combine,
    )
    u_idx = np.array([train.user_index.get(u, -1) for u in users_ext], dtype=np.int64)
    i_idx = np.array([train.item_index.get(i, -1) for i in items_ext], dtype=np.int64)
    dists = ensemble_predict_many(ensemble, u_idx, i_idx)
    mode_idx = np.argmax(dists, axis=1)
    cum = np.cumsum(dists, axis=1)
    median_idx = np.minimum(
        (cum < 0.5).sum(axis=1), train.scale.size - 1
    )
    median_values = train.scale.values[median_idx]
    return mode_idx, median_values, dists, ensemble


def _predict_naive(train, users_ext, items_ext, config):
    scale = train.scale
    values = np.empty(len(users_ext))
    for q, iid in enumerate(items_ext):
        i = train.item_index.get(iid)
        values[q] = naive_predict(train, i, scale)
    return scale.nearest_indices(values), values


def _predict_item_item(train, users_ext, items_ext, config):
    scale = train.scale
    model = item_item_fit(train, config.k_neighbors)
    values = np.empty(len(users_ext))
    for q, (uid, iid) in enumerate(zip(users_ext, items_ext)):
        u = train.user_index.get(uid)
        i = train.item_index.get(iid)
        values[q] = item_item_predict(model, train, u, i, scale)
    return scale.nearest_indices(values), values


def _predict_mf(train, users_ext, items_ext, config):
    scale = train.scale
    model = mf_fit(train, config.mf, scale)
    values = np.empty(len(users_ext))
    for q, (uid, iid) in enumerate(zip(users_ext, items_ext)):
        u = train.user_index.get(uid)
        i = train.item_index.get(iid)
        values[q] = mf_predict(model, u, i, scale)
    return scale.nearest_indices(values), values


_BASELINE_PREDICTORS: dict[str, Callable] = {
    "naive": _predict_naive,
    "item-item": _predict_item_item,
    "mf": _predict_mf,
}


def _metric_block(label_idx, value_pred, truth_idx, scale, mask=None):
    if mask is not None:
        label_idx = label_idx[mask]
        value_pred = value_pred[mask]
        truth_idx = truth_idx[mask]
    if len(truth_idx) == 0:
        return None, None
    return (
        accuracy(label_idx, truth_idx),
        mae(value_pred, truth_idx, scale),
    )


def cross_validate(method, dataset: Dataset, k: int = 5, seed: int = 0,
                   config: EvalConfig | None = None) -> EvalReport:
    """k-fold evaluation of one method.

    ``method`` is a name from ``METHOD_NAMES`` or, for harness testing, a
    callable ``(train, users_ext, items_ext, config) -> (label_idx, values)``.
    Cold-start links are detected against each training fold and reported
    separately as well as pooled.
    """
    config = config or EvalConfig()
    split = kfold_split(dataset, k, seed)
    rows: list[MethodFoldResult] = []
    method_name = method if isinstance(method, str) else getattr(
        method, "__name__", "custom")
    method_name = _METHOD_ALIASES.get(method_name, method_name)
    if isinstance(method, str) and method_name not in METHOD_NAMES:
        raise ValueError(f"unknown method {method!r}; expected one of {METHOD_NAMES}")
    scale = dataset.scale
    all_idx = np.arange(dataset.n_ratings)
    for fold, test_idx in enumerate(split.folds):
        keep = np.ones(dataset.n_ratings, dtype=bool)
        keep[test_idx] = False
        train = dataset.subset(all_idx[keep])
        users_ext = [dataset.user_ids[u] for u in dataset.users[test_idx]]
        items_ext = [dataset.item_ids[i] for i in dataset.items[test_idx]]
        truth_idx = dataset.ratings[test_idx]
        cold = np.array([
            uid not in train.user_index or iid not in train.item_index
            for uid, iid in zip(users_ext, items_ext)
        ])

        mode_mae = None
        if callable(method):
            label_idx, value_pred = method(train, users_ext, items_ext, config)
        elif method_name == MMSBM_METHOD:
            label_idx, value_pred, _, _ = predict_links_mmsbm(
                train, users_ext, items_ext, config)
            mode_values = scale.values[label_idx]
            mode_mae = mae(mode_values, truth_idx, scale)
        else:
            label_idx, value_pred = _BASELINE_PREDICTORS[method_name](
                train, users_ext, items_ext, config)

        acc_all, mae_all = _metric_block(label_idx, value_pred, truth_idx, scale)
        acc_cold, mae_cold = _metric_block(
            label_idx, value_pred, truth_idx, scale, mask=cold)
        rows.append(MethodFoldResult(
            method=method_name,
            fold=fold,
            n_test=len(test_idx),
            accuracy=acc_all,
            mae=mae_all,
            cold_count=int(cold.sum()),
            cold_accuracy=acc_cold,
            cold_mae=mae_cold,
            mode_mae=mode_mae,
        ))
        logger.info(
            "%s fold %d: accuracy %.4f, MAE %.4f, cold %d/%d",
            method_name, fold, acc_all, mae_all, int(cold.sum()), len(test_idx),
        )
    return EvalReport(k=k, seed=seed, rows=tuple(rows))


def evaluate_methods(methods: Sequence[str], dataset: Dataset, k: int = 5,
                     seed: int = 0,
                     config: EvalConfig | None = None) -> EvalReport:
    """Run :func:`cross_validate` for several methods on identical folds."""
    report: EvalReport | None = None
    for method in methods:
        part = cross_validate(method, dataset, k=k, seed=seed, config=config)
        report = part if report is None else report.merged_with(part)
    if report is None:
        raise ValueError("no methods given")
    return report


@dataclass(frozen=True)
class ScalingPoint:
    n_ratings: int
    seconds_per_iteration: float


def scaling_benchmark(dataset: Dataset, subset_fractions: Sequence[float],
                      config: FitConfig, iterations: int = 5,
                      warmup: int = 1) -> tuple[ScalingPoint, ...]:
    """Wall time per EM iteration on nested random subsets of the ratings.

    Subsets are prefixes of one seeded permutation, so each smaller subset is
    contained in every larger one.
    """
    fractions = sorted(float(f) for f in subset_fractions)
    if not fractions or fractions[0] <= 0 or fractions[-1] > 1:
        raise ValueError("subset fractions must lie in (0, 1]")
    config.validate(dataset.scale.size)
    perm = np.random.default_rng(config.seed).permutation(dataset.n_ratings)
    points: list[ScalingPoint] = []
    for frac in fractions:
        n_keep = max(1, int(round(frac * dataset.n_ratings)))
        sub = dataset.subset(perm[:n_keep])
        params = init_params(config, sub.n_users, sub.n_items, sub.scale)
        for _ in range(warmup):
            params = em_step(params, sub, config.prob_floor)
        start = time.perf_counter()
        for _ in range(iterations):
            params = em_step(params, sub, config.prob_floor)
        elapsed = (time.perf_counter() - start) / iterations
        points.append(ScalingPoint(n_ratings=sub.n_ratings,
                                   seconds_per_iteration=elapsed))
        logger.info("scaling: %d ratings, %.4f s/iteration",
                    sub.n_ratings, elapsed)
    return tuple(points)
