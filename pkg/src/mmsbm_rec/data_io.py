"""Delimited-file parsing, model snapshots, and report serialization.

One configurable delimited-text parser covers MovieLens 100K (tab), 10M
(double-colon), and generic CSV; extra columns such as timestamps are parsed
and discarded.  Snapshots use a self-describing single-file container whose
bytes are fully deterministic, so identical inputs produce identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Dataset, ModelParams, RatingScale, scale_from_labels, validate_params
from .em import FitConfig, FitResult
from .ensemble import Ensemble
from .evaluate import EvalReport

__all__ = [
    "DelimitedFormat",
    "ML100K_RATINGS",
    "ML10M_RATINGS",
    "ML100K_USERS",
    "CSV_RATINGS",
    "ParseError",
    "parse_ratings",
    "write_ratings",
    "UserMetadata",
    "parse_metadata",
    "SnapshotError",
    "ModelSnapshot",
    "write_snapshot",
    "read_snapshot",
    "EnsembleSnapshot",
    "write_ensemble",
    "read_ensemble",
    "write_report",
    "format_float",
]

logger = logging.getLogger(__name__)

_MAGIC = b"mmsbm-rec-snapshot\n"
_SNAPSHOT_VERSION = 1


class ParseError(ValueError):
    """A data file line could not be interpreted; message carries the line."""


class SnapshotError(RuntimeError):
    """Snapshot file is corrupted, truncated, or fails its invariants."""


@dataclass(frozen=True)
class DelimitedFormat:
    """Framing of a delimited text file: separator, column names, header."""

    delimiter: str = "\t"
    columns: tuple[str, ...] = ("user", "item", "rating")
    has_header: bool = False

    def column(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise ValueError(f"format has no {name!r} column") from None


ML100K_RATINGS = DelimitedFormat("\t", ("user", "item", "rating", "timestamp"))
ML10M_RATINGS = DelimitedFormat("::", ("user", "item", "rating", "timestamp"))
ML100K_USERS = DelimitedFormat("|", ("user", "age", "gender", "occupation", "zip"))
CSV_RATINGS = DelimitedFormat(",", ("user", "item", "rating"))

FORMAT_PRESETS: Mapping[str, DelimitedFormat] = {
    "ml100k": ML100K_RATINGS,
    "ml10m": ML10M_RATINGS,
    "csv": CSV_RATINGS,
    "tsv": DelimitedFormat("\t", ("user", "item", "rating")),
}


def _iter_data_lines(path, fmt: DelimitedFormat):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if fmt.has_header and lineno == 1:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            yield lineno, line


def parse_ratings(path, fmt: DelimitedFormat, scale: RatingScale) -> list[tuple]:
    """Read (user id, item id, label) triples from a delimited file.

    Ids stay strings; rating tokens must resolve to a scale label.  Errors
    carry the offending line number.
    """
    u_col = fmt.column("user")
    i_col = fmt.column("item")
    r_col = fmt.column("rating")
    needed = max(u_col, i_col, r_col) + 1
    triples: list[tuple] = []
    for lineno, line in _iter_data_lines(path, fmt):
        parts = line.split(fmt.delimiter)
        if len(parts) < needed:
            raise ParseError(
                f"{path}:{lineno}: expected at least {needed} fields, "
                f"got {len(parts)}: {line!r}"
            )
        token = parts[r_col].strip()
        try:
            r = scale.resolve(token)
        except ValueError:
            raise ParseError(
                f"{path}:{lineno}: rating {token!r} is not on the scale"
            ) from None
        triples.append((parts[u_col].strip(), parts[i_col].strip(),
                        scale.labels[r]))
    if not triples:
        raise ParseError(f"{path}: no ratings found")
    return triples


def write_ratings(triples: Iterable[tuple], path, fmt: DelimitedFormat) -> None:
    """Write (user, item, label) triples one per line; inverse of parsing."""
    from .core import _canonical_token

    with open(path, "w", encoding="utf-8") as fh:
        if fmt.has_header:
            fh.write(fmt.delimiter.join(("user", "item", "rating")) + "\n")
        for uid, iid, label in triples:
            fh.write(fmt.delimiter.join(
                (str(uid), str(iid), _canonical_token(label))) + "\n")


@dataclass(frozen=True)
class UserMetadata:
    """Per-user demographic side information: age in years and gender."""

    ages: Mapping
    genders: Mapping
    warnings: tuple[str, ...] = ()

    def __contains__(self, user_id) -> bool:
        return user_id in self.ages

    def __len__(self) -> int:
        return len(self.ages)


def parse_metadata(path, fmt: DelimitedFormat = ML100K_USERS,
                   dataset: Dataset | None = None) -> UserMetadata:
    """Read per-user (age, gender) records.

    Users that never appear in ``dataset`` (when given) are retained but
    listed in the warnings.
    """
    u_col = fmt.column("user")
    a_col = fmt.column("age")
    g_col = fmt.column("gender")
    needed = max(u_col, a_col, g_col) + 1
    ages: dict = {}
    genders: dict = {}
    warnings: list[str] = []
    for lineno, line in _iter_data_lines(path, fmt):
        parts = line.split(fmt.delimiter)
        if len(parts) < needed:
            raise ParseError(
                f"{path}:{lineno}: expected at least {needed} fields: {line!r}"
            )
        uid = parts[u_col].strip()
        try:
            age = int(parts[a_col].strip())
        except ValueError:
            raise ParseError(
                f"{path}:{lineno}: age {parts[a_col]!r} is not an integer"
            ) from None
        if age <= 0:
            raise ParseError(f"{path}:{lineno}: age must be positive, got {age}")
        if uid in ages:
            raise ParseError(f"{path}:{lineno}: duplicate metadata for user {uid!r}")
        ages[uid] = age
        genders[uid] = parts[g_col].strip()
        if dataset is not None and uid not in dataset.user_index:
            warnings.append(f"user {uid!r} has metadata but no ratings")
    return UserMetadata(ages=ages, genders=genders, warnings=tuple(warnings))


def format_float(x: float) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    return repr(float(x))


def _write_json_line(fh, obj) -> None:
    fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())
    fh.write(b"\n")


def _save_array(fh, arr: np.ndarray) -> None:
    np.save(fh, np.ascontiguousarray(arr))


def _load_array(fh) -> np.ndarray:
    try:
        return np.load(fh, allow_pickle=False)
    except (ValueError, EOFError, OSError) as exc:
        raise SnapshotError(f"corrupted snapshot: {exc}") from exc


def _scale_to_header(scale: RatingScale) -> dict:
    return {
        "labels": [lab if isinstance(lab, (int, float, str)) else str(lab)
                   for lab in scale.labels],
        "values": [float(v) for v in scale.values],
    }


def _scale_from_header(header: dict) -> RatingScale:
    return scale_from_labels(tuple(header["labels"]), header["values"])


@dataclass(frozen=True)
class ModelSnapshot:
    """One parameter set plus how it was produced."""

    scale: RatingScale
    params: ModelParams
    provenance: dict = field(default_factory=dict)
    user_ids: tuple = ()
    item_ids: tuple = ()


def _checked(params: ModelParams, what: str) -> ModelParams:
    violations = validate_params(params, tol=1e-9)
    if violations:
        raise SnapshotError(
            f"{what} fails parameter invariants: {'; '.join(violations[:3])}"
        )
    return params


def write_snapshot(snapshot: ModelSnapshot, path) -> None:
    """Serialize a single model; parameters round-trip bit-exactly."""
    _checked(snapshot.params, "snapshot")
    header = {
        "version": _SNAPSHOT_VERSION,
        "kind": "model",
        "scale": _scale_to_header(snapshot.scale),
        "provenance": snapshot.provenance,
        "user_ids": list(snapshot.user_ids),
        "item_ids": list(snapshot.item_ids),
        "arrays": ["theta", "eta", "p"],
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        _write_json_line(fh, header)
        _save_array(fh, snapshot.params.theta)
        _save_array(fh, snapshot.params.eta)
        _save_array(fh, snapshot.params.p)


def _read_header(fh, path, expected_kind: str) -> dict:
    magic = fh.read(len(_MAGIC))
    if magic != _MAGIC:
        raise SnapshotError(f"{path} is not a snapshot file")
    line = fh.readline()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: unreadable snapshot header") from exc
    if header.get("version") != _SNAPSHOT_VERSION:
        raise SnapshotError(
            f"{path}: snapshot version {header.get('version')} "
            f"not supported (expected {_SNAPSHOT_VERSION})"
        )
    if header.get("kind") != expected_kind:
        raise SnapshotError(
            f"{path}: expected a {expected_kind} snapshot, "
            f"found {header.get('kind')!r}"
        )
    return header


def read_snapshot(path) -> ModelSnapshot:
    """Load a single-model snapshot, re-checking parameter invariants."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path, "model")
        theta = _load_array(fh)
        eta = _load_array(fh)
        p = _load_array(fh)
    params = _checked(ModelParams(theta=theta, eta=eta, p=p), f"snapshot {path}")
    return ModelSnapshot(
        scale=_scale_from_header(header["scale"]),
        params=params,
        provenance=header.get("provenance", {}),
        user_ids=tuple(header.get("user_ids", ())),
        item_ids=tuple(header.get("item_ids", ())),
    )


@dataclass(frozen=True)
class EnsembleSnapshot:
    """An ensemble of runs plus the id tables needed to query it."""

    ensemble: Ensemble
    provenance: dict = field(default_factory=dict)
    user_ids: tuple = ()
    item_ids: tuple = ()


def write_ensemble(snapshot: EnsembleSnapshot, path) -> None:
    """Serialize all runs of an ensemble into one deterministic container."""
    ens = snapshot.ensemble
    for run in ens.runs:
        _checked(run.params, f"run seed={run.seed}")
    cfg = ens.config
    header = {
        "version": _SNAPSHOT_VERSION,
        "kind": "ensemble",
        "n_runs": ens.n_runs,
        "combine": ens.combine,
        "scale": _scale_to_header(ens.scale),
        "config": {
            "n_user_groups": cfg.n_user_groups,
            "n_item_groups": cfg.n_item_groups,
            "max_iterations": cfg.max_iterations,
            "tol": cfg.tol,
            "seed": cfg.seed,
            "prob_floor": cfg.prob_floor,
        },
        "seeds": [run.seed for run in ens.runs],
        "iterations": [run.iterations_run for run in ens.runs],
        "converged": [bool(run.converged) for run in ens.runs],
        "provenance": snapshot.provenance,
        "user_ids": list(snapshot.user_ids),
        "item_ids": list(snapshot.item_ids),
        "arrays": ["theta", "eta", "p", "trace_values", "trace_lengths"],
    }
    theta = np.stack([run.params.theta for run in ens.runs])
    eta = np.stack([run.params.eta for run in ens.runs])
    p = np.stack([run.params.p for run in ens.runs])
    trace_values = np.concatenate([run.log_likelihood_trace for run in ens.runs])
    trace_lengths = np.array(
        [len(run.log_likelihood_trace) for run in ens.runs], dtype=np.int64)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        _write_json_line(fh, header)
        for arr in (theta, eta, p, trace_values, trace_lengths):
            _save_array(fh, arr)


def read_ensemble(path) -> EnsembleSnapshot:
    """Load an ensemble container written by :func:`write_ensemble`."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path, "ensemble")
        theta = _load_array(fh)
        eta = _load_array(fh)
        p = _load_array(fh)
        trace_values = _load_array(fh)
        trace_lengths = _load_array(fh)
    scale = _scale_from_header(header["scale"])
    config = FitConfig(**header["config"])
    runs = []
    offset = 0
    for j, seed in enumerate(header["seeds"]):
        span = int(trace_lengths[j])
        trace = trace_values[offset:offset + span]
        offset += span
        params = _checked(
            ModelParams(theta=theta[j], eta=eta[j], p=p[j]),
            f"ensemble run {j} in {path}",
        )
        runs.append(FitResult(
            params=params,
            log_likelihood_trace=trace,
            iterations_run=int(header["iterations"][j]),
            converged=bool(header["converged"][j]),
            seed=int(seed),
        ))
    ensemble = Ensemble(runs=tuple(runs), scale=scale, config=config,
                        combine=header.get("combine", "average"))
    return EnsembleSnapshot(
        ensemble=ensemble,
        provenance=header.get("provenance", {}),
        user_ids=tuple(header.get("user_ids", ())),
        item_ids=tuple(header.get("item_ids", ())),
    )


REPORT_COLUMNS = ("method", "fold", "accuracy", "MAE",
                  "cold_count", "cold_accuracy", "cold_MAE")


def write_report(report: EvalReport, path, delimiter: str = ",",
                 header_comments: Sequence[str] = ()) -> None:
    """Write per-method, per-fold rows in the fixed column order.

    Re-emitting the same report produces byte-identical output.  Optional
    comment lines (prefixed ``#``) go above the column header.
    """
    def cell(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return format_float(x)
        return str(x)

    with open(path, "w", encoding="utf-8") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write(delimiter.join(REPORT_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(delimiter.join((
                row.method,
                str(row.fold),
                cell(row.accuracy),
                cell(row.mae),
                str(row.cold_count),
                cell(row.cold_accuracy),
                cell(row.cold_mae),
            )) + "\n")
