"""Command-line interface: fit, predict, evaluate, benchmark, synthesize,
analyze.

Configuration precedence is flags over config-file values over defaults; the
resolved configuration is validated before any data file is opened, and the
values that shaped an output file are written above its header as ``#``
comments.  Identical configuration and seeds produce byte-identical
artifacts regardless of worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import analysis, data_io, evaluate as ev
from .baselines import MFConfig
from .core import RatingScale, dataset_from_triples, scale_from_spec
from .data_io import (
    FORMAT_PRESETS, ML100K_USERS, DelimitedFormat, EnsembleSnapshot,
    ModelSnapshot, format_float, parse_metadata, parse_ratings, read_ensemble,
    write_ensemble, write_ratings, write_report, write_snapshot,
)
from .em import FitConfig
from .ensemble import COMBINE_MODES, ensemble_fit, ensemble_predict, estimate
from .evaluate import EvalConfig, evaluate_methods, scaling_benchmark
from .synthetic import SyntheticConfig, generate_synthetic, planted_partition_params

__all__ = ["RunConfig", "run", "main"]

logger = logging.getLogger(__name__)

WORKERS_ENV = "MMSBM_REC_WORKERS"

COMMANDS = ("fit", "predict", "evaluate", "benchmark", "synthesize", "analyze")

METADATA_PRESETS = {"ml100k-users": ML100K_USERS}


class CLIError(Exception):
    """Configuration problem detected before any computation."""


@dataclass
class RunConfig:
    """Resolved settings for one CLI invocation."""

    command: str
    dataset: str | None = None
    fmt: str = "ml100k"
    delimiter: str | None = None
    columns: str | None = None
    header: bool = False
    scale: str = "1:5:1"
    groups: str = "10,10"
    runs: int = 500
    seed: int = 0
    folds: int = 5
    methods: str = "mmsbm,naive,item-item,mf"
    workers: int = 1
    out: str | None = None
    max_iterations: int = 400
    tol: float = 1e-6
    prob_floor: float = 1e-12
    combine: str = "average"
    k_neighbors: int = 50
    mf_factors: int = 50
    mf_learning_rate: float = 0.002
    mf_lambda: float = 0.02
    mf_epochs: int = 100
    trace_out: str | None = None
    snapshot: str | None = None
    queries: str | None = None
    fractions: str = "0.25,0.5,1.0"
    bench_iterations: int = 5
    users: int = 200
    items: int = 200
    ratings_per_user: int = 50
    peak_mass: float = 0.9
    purity: float = 1.0
    snapshot_out: str | None = None
    metadata: str | None = None
    metadata_format: str = "ml100k-users"
    age_bin: int = 10

    def parsed_groups(self) -> tuple[int, int]:
        parts = self.groups.split(",")
        if len(parts) != 2:
            raise CLIError(f"--groups expects K,L; got {self.groups!r}")
        try:
            k, l = int(parts[0]), int(parts[1])
        except ValueError:
            raise CLIError(f"--groups expects integers; got {self.groups!r}")
        return k, l

    def parsed_scale(self) -> RatingScale:
        try:
            return scale_from_spec(self.scale)
        except ValueError as exc:
            raise CLIError(f"bad --scale: {exc}")

    def ratings_format(self) -> DelimitedFormat:
        if self.fmt not in FORMAT_PRESETS:
            raise CLIError(
                f"unknown --format {self.fmt!r}; "
                f"choose from {sorted(FORMAT_PRESETS)}"
            )
        fmt = FORMAT_PRESETS[self.fmt]
        if self.delimiter is not None:
            fmt = dataclasses.replace(fmt, delimiter=self.delimiter)
        if self.columns is not None:
            fmt = dataclasses.replace(
                fmt, columns=tuple(c.strip() for c in self.columns.split(",")))
        if self.header:
            fmt = dataclasses.replace(fmt, has_header=True)
        return fmt

    def fit_config(self) -> FitConfig:
        k, l = self.parsed_groups()
        cfg = FitConfig(
            n_user_groups=k, n_item_groups=l,
            max_iterations=self.max_iterations, tol=self.tol,
            seed=self.seed, prob_floor=self.prob_floor,
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise CLIError(str(exc))
        return cfg

    def mf_config(self) -> MFConfig:
        cfg = MFConfig(
            k_factors=self.mf_factors, learning_rate=self.mf_learning_rate,
            reg_lambda=self.mf_lambda, epochs=self.mf_epochs, seed=self.seed,
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise CLIError(str(exc))
        return cfg

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            fit=self.fit_config(), n_runs=self.runs, base_seed=self.seed,
            combine=self.combine, k_neighbors=self.k_neighbors,
            mf=self.mf_config(), workers=self.workers,
        )

    def parsed_methods(self) -> tuple[str, ...]:
        methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        for m in methods:
            if m not in ev.METHOD_NAMES and m not in ("mmsbm-ensemble",):
                raise CLIError(
                    f"unknown method {m!r}; choose from {ev.METHOD_NAMES}")
        if not methods:
            raise CLIError("--methods selected nothing")
        return methods

    def parsed_fractions(self) -> tuple[float, ...]:
        try:
            fracs = tuple(float(f) for f in self.fractions.split(","))
        except ValueError:
            raise CLIError(f"bad --fractions {self.fractions!r}")
        if not fracs or any(f <= 0 or f > 1 for f in fracs):
            raise CLIError("--fractions must lie in (0, 1]")
        return fracs

    def validate(self) -> None:
        """Full up-front check; no data file is touched yet."""
        if self.command not in COMMANDS:
            raise CLIError(f"unknown command {self.command!r}")
        if self.workers < 1:
            raise CLIError("--workers must be at least 1")
        if self.runs < 1:
            raise CLIError("--runs must be at least 1")
        if self.combine not in COMBINE_MODES:
            raise CLIError(f"--combine must be one of {COMBINE_MODES}")
        needs_dataset = self.command in ("fit", "evaluate", "benchmark")
        if needs_dataset:
            if not self.dataset:
                raise CLIError(f"{self.command} requires --dataset")
            if not Path(self.dataset).is_file():
                raise CLIError(f"dataset file not found: {self.dataset}")
            self.parsed_scale()
            self.ratings_format()
        if self.command in ("fit", "evaluate", "benchmark", "synthesize"):
            self.fit_config()
        if self.command == "evaluate":
            if self.folds < 2:
                raise CLIError("--folds must be at least 2")
            self.parsed_methods()
            self.mf_config()
        if self.command == "benchmark":
            self.parsed_fractions()
            if self.bench_iterations < 1:
                raise CLIError("--bench-iterations must be at least 1")
        if self.command == "predict":
            if not self.snapshot or not Path(self.snapshot).is_file():
                raise CLIError("predict requires an existing --snapshot")
            if not self.queries or not Path(self.queries).is_file():
                raise CLIError("predict requires an existing --queries file")
        if self.command == "synthesize":
            if self.users < 1 or self.items < 1:
                raise CLIError("--users and --items must be positive")
            if not 0 < self.ratings_per_user <= self.items:
                raise CLIError("--ratings-per-user must be in [1, items]")
            if not 0.0 <= self.purity <= 1.0:
                raise CLIError("--purity must lie in [0, 1]")
            self.parsed_scale()
        if self.command == "analyze":
            if not self.snapshot or not Path(self.snapshot).is_file():
                raise CLIError("analyze requires an existing --snapshot")
            if not self.metadata or not Path(self.metadata).is_file():
                raise CLIError("analyze requires an existing --metadata file")
            if self.metadata_format not in METADATA_PRESETS:
                raise CLIError(
                    f"unknown --metadata-format {self.metadata_format!r}")
            if self.age_bin < 1:
                raise CLIError("--age-bin must be at least 1")
        if self.command != "predict" and not self.out:
            raise CLIError(f"{self.command} requires --out")
        if self.command == "predict" and not self.out:
            raise CLIError("predict requires --out")


def _provenance(config: RunConfig, keys: tuple[str, ...]) -> list[str]:
    values = dataclasses.asdict(config)
    return [f"{key}={values[key]}" for key in keys]


def _load_dataset(config: RunConfig):
    scale = config.parsed_scale()
    triples = parse_ratings(config.dataset, config.ratings_format(), scale)
    dataset = dataset_from_triples(triples, scale)
    logger.info("loaded %d ratings: %d users, %d items",
                dataset.n_ratings, dataset.n_users, dataset.n_items)
    return dataset


def _cmd_fit(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    ensemble = ensemble_fit(
        dataset, config.fit_config(), config.runs, config.seed,
        workers=config.workers, combine=config.combine,
    )
    snapshot = EnsembleSnapshot(
        ensemble=ensemble,
        provenance={
            "command": "fit", "dataset": str(config.dataset),
            "runs": config.runs, "base_seed": config.seed,
        },
        user_ids=dataset.user_ids,
        item_ids=dataset.item_ids,
    )
    write_ensemble(snapshot, config.out)
    print(f"wrote ensemble of {ensemble.n_runs} run(s) to {config.out}")
    if config.trace_out:
        with open(config.trace_out, "w", encoding="utf-8") as fh:
            fh.write("run,iteration,log_likelihood\n")
            for j, fit_run in enumerate(ensemble.runs):
                for it, ll in enumerate(fit_run.log_likelihood_trace):
                    fh.write(f"{j},{it},{format_float(float(ll))}\n")
        print(f"wrote likelihood trace to {config.trace_out}")


def _read_queries(path, delimiter: str) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) < 2:
                raise data_io.ParseError(
                    f"{path}:{lineno}: expected user{delimiter}item")
            pairs.append((parts[0].strip(), parts[1].strip()))
    if not pairs:
        raise data_io.ParseError(f"{path}: no queries found")
    return pairs


def _cmd_predict(config: RunConfig) -> None:
    snap = read_ensemble(config.snapshot)
    ensemble = snap.ensemble
    scale = ensemble.scale
    user_index = {uid: j for j, uid in enumerate(snap.user_ids)}
    item_index = {iid: j for j, iid in enumerate(snap.item_ids)}
    delimiter = config.delimiter if config.delimiter is not None else "\t"
    pairs = _read_queries(config.queries, delimiter)
    label_cols = ",".join(f"p_{scale.canonical_label(r)}"
                          for r in range(scale.size))
    with open(config.out, "w", encoding="utf-8") as fh:
        fh.write(f"user,item,cold_user,cold_item,{label_cols},"
                 "mode,median,mean\n")
        for uid, iid in pairs:
            u = user_index.get(uid)
            i = item_index.get(iid)
            dist = ensemble_predict(ensemble, u, i)
            probs = ",".join(format_float(float(x)) for x in dist)
            fh.write(",".join((
                uid, iid,
                "1" if u is None else "0",
                "1" if i is None else "0",
                probs,
                str(estimate(dist, "mode", scale)),
                str(estimate(dist, "median", scale)),
                format_float(estimate(dist, "mean", scale)),
            )) + "\n")
    print(f"wrote {len(pairs)} predictions to {config.out}")


_EVAL_KEYS = ("dataset", "scale", "groups", "runs", "seed", "folds",
              "methods", "combine", "k_neighbors", "mf_factors",
              "mf_learning_rate", "mf_lambda", "mf_epochs", "tol",
              "max_iterations", "prob_floor", "workers")


def _cmd_evaluate(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    report = evaluate_methods(
        config.parsed_methods(), dataset, k=config.folds, seed=config.seed,
        config=config.eval_config(),
    )
    write_report(report, config.out,
                 header_comments=_provenance(config, _EVAL_KEYS))
    print(f"wrote evaluation report to {config.out}")
    for method, stats in report.summary().items():
        print(f"  {method}: accuracy {stats['accuracy_mean']:.4f} "
              f"(+/- {stats['accuracy_sem']:.4f}), "
              f"MAE {stats['mae_mean']:.4f} (+/- {stats['mae_sem']:.4f}), "
              f"cold {100 * stats['cold_fraction']:.3f}%")


def _cmd_benchmark(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    points = scaling_benchmark(
        dataset, config.parsed_fractions(), config.fit_config(),
        iterations=config.bench_iterations,
    )
    keys = ("dataset", "scale", "groups", "seed", "fractions",
            "bench_iterations")
    with open(config.out, "w", encoding="utf-8") as fh:
        for line in _provenance(config, keys):
            fh.write(f"# {line}\n")
        fh.write("n_ratings,seconds_per_iteration\n")
        for point in points:
            fh.write(f"{point.n_ratings},"
                     f"{format_float(point.seconds_per_iteration)}\n")
    print(f"wrote scaling table to {config.out}")
    for point in points:
        print(f"  {point.n_ratings} ratings: "
              f"{point.seconds_per_iteration:.4f} s/iteration")


def _cmd_synthesize(config: RunConfig) -> None:
    scale = config.parsed_scale()
    k, l = config.parsed_groups()
    params = planted_partition_params(
        config.users, config.items, k, l, scale.size,
        peak_mass=config.peak_mass, membership_purity=config.purity,
    )
    gen = SyntheticConfig(
        n_users=config.users, n_items=config.items,
        ratings_per_user=config.ratings_per_user, seed=config.seed,
        scale=scale, params=params,
    )
    dataset, truth = generate_synthetic(gen)
    write_ratings(dataset.triples(), config.out, config.ratings_format())
    print(f"wrote {dataset.n_ratings} synthetic ratings to {config.out}")
    if config.snapshot_out:
        snapshot = ModelSnapshot(
            scale=scale, params=truth,
            provenance={
                "command": "synthesize", "seed": config.seed,
                "users": config.users, "items": config.items,
                "ratings_per_user": config.ratings_per_user,
                "peak_mass": config.peak_mass, "purity": config.purity,
            },
            user_ids=dataset.user_ids, item_ids=dataset.item_ids,
        )
        write_snapshot(snapshot, config.snapshot_out)
        print(f"wrote planted parameters to {config.snapshot_out}")


def _cmd_analyze(config: RunConfig) -> None:
    snap = read_ensemble(config.snapshot)
    metadata = parse_metadata(config.metadata,
                              METADATA_PRESETS[config.metadata_format])
    theta_shape = snap.ensemble.runs[0].params.theta.shape
    if len(snap.user_ids) != theta_shape[0]:
        raise CLIError("snapshot lacks the user id table needed for analysis")
    report = analysis.group_similarity(
        snap.ensemble, snap.user_ids, metadata, age_bin_width=config.age_bin)
    keys = ("snapshot", "metadata", "age_bin")
    analysis.write_similarity_report(
        report, config.out, header_comments=_provenance(config, keys))
    print(f"wrote similarity report to {config.out}")
    for corr in report.correlations:
        print(f"  {corr.group}: rho={corr.coefficient:.4f} "
              f"p={corr.p_value:.3g} over {corr.n_pairs} pairs")


_COMMAND_HANDLERS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "benchmark": _cmd_benchmark,
    "synthesize": _cmd_synthesize,
    "analyze": _cmd_analyze,
}


def run(config: RunConfig) -> int:
    """Validate the configuration, then execute its command."""
    try:
        config.validate()
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        _COMMAND_HANDLERS[config.command](config)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__module__}.{type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with defaults for any flag")
    parser.add_argument("--dataset", help="ratings file")
    parser.add_argument("--format", dest="fmt",
                        help="ratings framing preset: ml100k, ml10m, csv, tsv")
    parser.add_argument("--delimiter", help="override the preset delimiter")
    parser.add_argument("--columns", help="override column names, comma-separated")
    parser.add_argument("--header", action="store_const", const=True,
                        help="first line is a header")
    parser.add_argument("--scale",
                        help='rating scale: "1,2,3" or "start:stop:step"')
    parser.add_argument("--groups", help="user,item group counts, e.g. 10,10")
    parser.add_argument("--runs", type=int, help="number of independent fits")
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--folds", type=int, help="cross-validation folds")
    parser.add_argument("--methods", help="comma-separated method names")
    parser.add_argument("--workers", type=int,
                        help=f"worker threads (default ${WORKERS_ENV} or 1)")
    parser.add_argument("--out", help="main output path")
    parser.add_argument("--max-iter", dest="max_iterations", type=int)
    parser.add_argument("--tol", type=float)
    parser.add_argument("--prob-floor", dest="prob_floor", type=float)
    parser.add_argument("--combine", choices=COMBINE_MODES)
    parser.add_argument("--k-neighbors", dest="k_neighbors", type=int)
    parser.add_argument("--mf-factors", dest="mf_factors", type=int)
    parser.add_argument("--mf-lr", dest="mf_learning_rate", type=float)
    parser.add_argument("--mf-lambda", dest="mf_lambda", type=float)
    parser.add_argument("--mf-epochs", dest="mf_epochs", type=int)
    parser.add_argument("--verbose", action="store_const", const=True,
                        help="log progress to stderr")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmsbm-rec",
        description="Mixed-membership block-model recommender toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit an ensemble and save a snapshot")
    p_fit.add_argument("--trace-out", dest="trace_out",
                       help="write the per-run likelihood trace here")

    p_pred = sub.add_parser("predict", help="predict for (user, item) queries")
    p_pred.add_argument("--snapshot", help="ensemble snapshot from fit")
    p_pred.add_argument("--queries", help="file of user/item pairs")

    p_eval = sub.add_parser("evaluate", help="cross-validate methods on a dataset")

    p_bench = sub.add_parser("benchmark", help="per-iteration scaling table")
    p_bench.add_argument("--fractions", help="nested subset sizes, e.g. 0.25,0.5,1")
    p_bench.add_argument("--bench-iterations", dest="bench_iterations", type=int)

    p_syn = sub.add_parser("synthesize", help="generate planted-model data")
    p_syn.add_argument("--users", type=int)
    p_syn.add_argument("--items", type=int)
    p_syn.add_argument("--ratings-per-user", dest="ratings_per_user", type=int)
    p_syn.add_argument("--peak-mass", dest="peak_mass", type=float)
    p_syn.add_argument("--purity", type=float)
    p_syn.add_argument("--snapshot-out", dest="snapshot_out",
                       help="write the planted parameters here")

    p_ana = sub.add_parser("analyze", help="profile-similarity study")
    p_ana.add_argument("--snapshot", help="ensemble snapshot from fit")
    p_ana.add_argument("--metadata", help="user metadata file")
    p_ana.add_argument("--metadata-format", dest="metadata_format")
    p_ana.add_argument("--age-bin", dest="age_bin", type=int)

    for sp in (p_fit, p_pred, p_eval, p_bench, p_syn, p_ana):
        _add_common(sp)
    return parser


def _merge_config(args: argparse.Namespace) -> RunConfig:
    defaults = {f.name: f.default for f in dataclasses.fields(RunConfig)
                if f.name != "command"}
    env_workers = os.environ.get(WORKERS_ENV)
    if env_workers is not None:
        try:
            defaults["workers"] = int(env_workers)
        except ValueError:
            raise CLIError(f"${WORKERS_ENV} must be an integer, "
                           f"got {env_workers!r}")
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        if not Path(config_path).is_file():
            raise CLIError(f"config file not found: {config_path}")
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CLIError(f"config file is not valid JSON: {exc}")
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        for key, value in file_values.items():
            default = defaults[key]
            if isinstance(default, bool):
                value = bool(value)
            elif isinstance(default, int):
                try:
                    value = int(value)
                except (TypeError, ValueError):
                    raise CLIError(f"config key {key!r} must be an integer")
            elif isinstance(default, float):
                try:
                    value = float(value)
                except (TypeError, ValueError):
                    raise CLIError(f"config key {key!r} must be a number")
            merged[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if value is not None:
            merged[key] = value
    return RunConfig(command=args.command, **merged)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "verbose", None):
        logging.basicConfig(level=logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s",
                            stream=sys.stderr)
    try:
        config = _merge_config(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
