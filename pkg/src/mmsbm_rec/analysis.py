"""Profile-similarity study: cosine similarity of user membership vectors.

Pairs of users are compared via the cosine of their membership vectors and
aggregated by gender pairing and by age group.  Group indices are not
comparable across ensemble runs, so similarities are always computed within
a run; only the resulting scalars are pooled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core import ModelParams
from .data_io import UserMetadata, format_float
from .em import FitResult
from .ensemble import Ensemble

__all__ = [
    "profile_similarity",
    "GroupStat",
    "RankCorrelation",
    "SimilarityReport",
    "group_similarity",
    "write_similarity_report",
]

logger = logging.getLogger(__name__)


def profile_similarity(theta_u: np.ndarray, theta_v: np.ndarray) -> float:
    """Cosine similarity of two membership vectors; in [0, 1] for
    nonnegative inputs and invariant to positive rescaling."""
    u = np.asarray(theta_u, dtype=np.float64)
    v = np.asarray(theta_v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cannot compare a zero membership vector")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class GroupStat:
    group: str
    mean: float
    sem: float
    n_pairs: int


@dataclass(frozen=True)
class RankCorrelation:
    """Spearman rank correlation of pair similarity against pair mean age."""

    group: str
    coefficient: float
    p_value: float
    n_pairs: int


@dataclass(frozen=True)
class SimilarityReport:
    groups: tuple[GroupStat, ...]
    correlations: tuple[RankCorrelation, ...]
    warnings: tuple[str, ...] = ()

    def group(self, name: str) -> GroupStat:
        for g in self.groups:
            if g.group == name:
                return g
        raise KeyError(name)

    def correlation(self, name: str) -> RankCorrelation:
        for c in self.correlations:
            if c.group == name:
                return c
        raise KeyError(name)


def _spearman(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Spearman rho with average ranks for ties; two-sided p-value from the
    large-sample normal approximation z = rho * sqrt(n - 1)."""
    rx = rankdata(x)
    ry = rankdata(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(np.dot(rx, rx)) * float(np.dot(ry, ry)))
    if denom == 0.0:
        return 0.0, 1.0
    rho = float(np.dot(rx, ry)) / denom
    z = rho * math.sqrt(len(x) - 1)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return rho, p


def _membership_sets(source) -> list[np.ndarray]:
    if isinstance(source, Ensemble):
        return [run.params.theta for run in source.runs]
    if isinstance(source, FitResult):
        return [source.params.theta]
    if isinstance(source, ModelParams):
        return [source.theta]
    raise TypeError(f"cannot extract memberships from {type(source).__name__}")


def _age_bin_label(age: int, width: int, start: int) -> str:
    lo = start + ((age - start) // width) * width
    return f"{lo}-{lo + width - 1}"


def group_similarity(source, user_ids: Sequence, metadata: UserMetadata,
                     age_bin_width: int = 10,
                     age_bin_start: int = 10) -> SimilarityReport:
    """Average pairwise profile similarity by gender pairing and age group.

    ``user_ids`` aligns membership rows with metadata keys (pass
    ``dataset.user_ids`` for a model fitted on that dataset).  Users without
    metadata are skipped with a warning.  For an ensemble, every run
    contributes its own pairwise similarities; group means and standard
    errors pool the per-run values exactly, while the rank correlation of
    similarity against pair mean age uses the run-averaged similarity of
    each pair.  Groups with fewer than two members are omitted with a
    warning.
    """
    if age_bin_width < 1:
        raise ValueError("age_bin_width must be at least 1")
    warnings: list[str] = []
    covered = [u for u, uid in enumerate(user_ids) if uid in metadata]
    missing = len(user_ids) - len(covered)
    if missing:
        warnings.append(f"{missing} users lack metadata and were skipped")
    if len(covered) < 2:
        raise ValueError("need metadata for at least two users")
    ids = [user_ids[u] for u in covered]
    ages = np.array([metadata.ages[uid] for uid in ids], dtype=np.float64)
    genders = np.array([str(metadata.genders[uid]) for uid in ids])

    iu, jv = np.triu_indices(len(covered), k=1)
    pair_gender = np.array([
        "-".join(sorted((a, b))) for a, b in zip(genders[iu], genders[jv])
    ])
    pair_mean_age = (ages[iu] + ages[jv]) / 2.0
    bins_u = np.array([_age_bin_label(int(a), age_bin_width, age_bin_start)
                       for a in ages])
    same_bin = bins_u[iu] == bins_u[jv]

    group_keys: dict[str, np.ndarray] = {}
    for name in sorted(set(pair_gender)):
        group_keys[name] = pair_gender == name
    for name in sorted(set(bins_u), key=lambda s: int(s.split("-")[0])):
        mask = same_bin & (bins_u[iu] == name)
        group_keys[f"age:{name}"] = mask
    for gname in sorted(set(pair_gender)):
        for bname in sorted(set(bins_u), key=lambda s: int(s.split("-")[0])):
            mask = (pair_gender == gname) & same_bin & (bins_u[iu] == bname)
            group_keys[f"{gname}|age:{bname}"] = mask

    sums = {name: 0.0 for name in group_keys}
    sqsums = {name: 0.0 for name in group_keys}
    counts = {name: 0 for name in group_keys}
    sim_accum = np.zeros(len(iu))

    runs = _membership_sets(source)
    for theta in runs:
        rows = theta[covered]
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("a user has a zero membership vector")
        unit = rows / norms
        sims = np.einsum("ij,ij->i", unit[iu], unit[jv])
        sim_accum += sims
        for name, mask in group_keys.items():
            if mask.any():
                vals = sims[mask]
                sums[name] += float(vals.sum())
                sqsums[name] += float(np.dot(vals, vals))
                counts[name] += len(vals)

    groups: list[GroupStat] = []
    for name in group_keys:
        n = counts[name]
        if n == 0:
            warnings.append(f"group {name} has fewer than two members")
            continue
        mean = sums[name] / n
        var = max(sqsums[name] / n - mean * mean, 0.0)
        sem = math.sqrt(var / n) if n > 1 else 0.0
        groups.append(GroupStat(group=name, mean=mean, sem=sem, n_pairs=n))

    mean_sims = sim_accum / len(runs)
    correlations: list[RankCorrelation] = []
    for name in sorted(set(pair_gender)):
        mask = pair_gender == name
        if mask.sum() < 3:
            warnings.append(f"too few {name} pairs for a rank correlation")
            continue
        rho, p = _spearman(mean_sims[mask], pair_mean_age[mask])
        correlations.append(RankCorrelation(
            group=name, coefficient=rho, p_value=p, n_pairs=int(mask.sum())))
        logger.info("similarity vs age for %s: rho=%.4f, p=%.3g", name, rho, p)

    return SimilarityReport(groups=tuple(groups),
                            correlations=tuple(correlations),
                            warnings=tuple(warnings))


SIMILARITY_COLUMNS = ("row_type", "group", "n_pairs", "mean_similarity",
                      "sem", "spearman_rho", "p_value")


def write_similarity_report(report: SimilarityReport, path,
                            delimiter: str = ",",
                            header_comments: Sequence[str] = ()) -> None:
    """Emit group statistics and rank correlations as delimited text."""
    with open(path, "w", encoding="utf-8") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write(delimiter.join(SIMILARITY_COLUMNS) + "\n")
        for g in report.groups:
            fh.write(delimiter.join((
                "group", g.group, str(g.n_pairs), format_float(g.mean),
                format_float(g.sem), "", "",
            )) + "\n")
        for c in report.correlations:
            fh.write(delimiter.join((
                "correlation", c.group, str(c.n_pairs), "", "",
                format_float(c.coefficient), format_float(c.p_value),
            )) + "\n")
