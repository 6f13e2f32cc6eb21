"""Command-line interface: train, predict, benchmark, synth, inspect.

Exit codes: 0 success, 1 internal error, 2 user/configuration error. Every
command is deterministic given (config, seed) and never mutates input files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import Dataset, FeatureSchema, dataset_from_csv, read_csv
from .evaluation import SyntheticSpec, benchmark, generate_synthetic, grid_search
from .models import DISPLAY_NAMES, MODEL_NAMES
from .pipeline import (
    build_gwa_dataset,
    build_milestone_dataset,
    load_climate_table,
    read_milestone_csv,
    select_categorical,
    select_numeric,
)
from .serialize import load_model, save_model


class UserError(Exception):
    """User/configuration mistake; reported with exit code 2."""


class _Stage:
    """Names the failing pipeline stage in error messages."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (UserError, _StageError)):
            raise _StageError(self.name, exc) from exc
        if isinstance(exc, UserError):
            raise _StageError(self.name, exc, user=True) from exc
        return False


class _StageError(Exception):
    def __init__(self, stage: str, cause: Exception, user: bool | None = None):
        super().__init__(f"error in stage '{stage}': {cause}")
        self.stage = stage
        self.user = user if user is not None else isinstance(
            cause, (ConfigError, FileNotFoundError, ValueError, KeyError)
        )


def _load_dataset(cfg: RunConfig) -> Dataset:
    data = cfg.data
    if data.format == "generic-csv":
        if not data.target:
            raise UserError("generic-csv input requires data.target")
        return dataset_from_csv(
            data.path,
            target=data.target,
            delimiter=data.effective_delimiter,
            overrides=data.schema_overrides,
        )
    if data.format == "milestone-csv":
        pl = cfg.pipeline
        if not (pl.source_milestone and pl.target_milestone):
            raise UserError("milestone-csv input requires pipeline.source_milestone and target_milestone")
        records = read_milestone_csv(data.path, delimiter=data.effective_delimiter)
        climate = load_climate_table(pl.climate_table) if pl.climate_table else None
        dataset, report = build_milestone_dataset(
            records,
            pl.source_milestone,
            pl.intermediate_milestones,
            pl.target_milestone,
            climate_table=climate,
        )
        if report.total:
            print(
                f"skipped {report.total} projects "
                f"({report.missing_milestone} missing milestones, "
                f"{report.ordering_violation} ordering violations)",
                file=sys.stderr,
            )
        return dataset
    # gwa-trace: path is one trace file or a directory of them
    paths = (
        sorted(
            os.path.join(data.path, f)
            for f in os.listdir(data.path)
            if f.endswith(".csv")
        )
        if os.path.isdir(data.path)
        else [data.path]
    )
    return build_gwa_dataset(paths, lag_count=cfg.pipeline.lag_count, delimiter=data.effective_delimiter)


def _apply_selection(dataset: Dataset, cfg: RunConfig) -> Dataset:
    """One-shot feature selection per the configured thresholds."""
    pl = cfg.pipeline
    keep_numeric = dataset.schema.numeric_predictors()
    keep_categorical = dataset.schema.categorical_predictors()
    if pl.numeric_r_threshold is not None:
        keep_numeric = select_numeric(dataset, dataset.schema.target, pl.numeric_r_threshold)
    if pl.categorical_p_threshold is not None:
        keep_categorical = select_categorical(
            dataset, dataset.schema.target, pl.categorical_p_threshold
        )
    if (
        pl.numeric_r_threshold is None
        and pl.categorical_p_threshold is None
    ):
        return dataset
    keep = set(keep_numeric) | set(keep_categorical)
    columns = tuple(
        (name, kind)
        for name, kind in dataset.schema.columns
        if name == dataset.schema.target
        or kind in ("date", "identifier")
        or name in keep
    )
    schema = FeatureSchema(columns, dataset.schema.target, dataset.schema.weight_units)
    idx = [dataset.schema.index_of(name) for name, _ in columns]
    rows = tuple(tuple(row[i] for i in idx) for row in dataset.rows)
    return Dataset(schema, rows)


def _float_cell(v) -> str:
    return repr(float(v))


def write_dataset_csv(dataset: Dataset, path) -> None:
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow([name for name, _ in dataset.schema.columns])
        kinds = [kind for _, kind in dataset.schema.columns]
        for row in dataset.rows:
            writer.writerow(
                [
                    ""
                    if v is None
                    else (_float_cell(v) if kind == "numeric" else str(v))
                    for v, kind in zip(row, kinds)
                ]
            )


def cmd_train(args) -> int:
    with _Stage("config"):
        cfg = load_config(args.config)
        if args.threads:
            cfg.threads = args.threads
    with _Stage("ingest"):
        dataset = _load_dataset(cfg)
    with _Stage("feature-selection"):
        dataset = _apply_selection(dataset, cfg)
    with _Stage("grid-search"):
        name = cfg.model.name
        if name not in MODEL_NAMES:
            raise UserError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
        result = grid_search(
            name,
            cfg.model.grid or None,
            dataset,
            cfg.cv.folds,
            cfg.cv.seed,
            caps=cfg.pipeline.tail_caps or None,
            threads=cfg.threads,
        )
    with _Stage("write"):
        model_path = cfg.output.model_path or "model.json"
        save_model(model_path, result.final_model)
        report = {
            "model": name,
            "display_name": DISPLAY_NAMES[name],
            "best_params": result.best_params,
            "cv": {
                "median_ae": result.best_cv.median_ae,
                "mean_ae": result.best_cv.mean_ae,
                "coverage_pct": result.best_cv.coverage_pct,
                "fold_metrics": result.best_cv.fold_metrics,
            },
            "param_count": result.final_model.parameter_count(),
            "evaluations": [
                {
                    "params": e.params,
                    "median_ae": e.median_ae,
                    "mean_ae": e.mean_ae,
                }
                for e in result.evaluations
            ],
        }
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        if cfg.output.fit_report:
            with open(cfg.output.fit_report, "w", encoding="utf-8") as fh:
                fh.write(text)
        print(f"model written to {model_path}")
        print(
            f"cv median AE {result.best_cv.median_ae:.4f}, "
            f"mean AE {result.best_cv.mean_ae:.4f}, best params {result.best_params}"
        )
    return 0


def cmd_predict(args) -> int:
    with _Stage("load-model"):
        fitted = load_model(args.model)
    with _Stage("read-input"):
        schema = fitted.model.schema if hasattr(fitted, "model") else fitted.schema
        header, raw_rows = read_csv(args.input)
        required = [
            name for name, _ in schema.columns if name != schema.target
        ]
        missing = [name for name in required if name not in header]
        if missing:
            raise UserError(f"input is missing columns {missing}")
        positions = {name: header.index(name) for name in header}
        rows = []
        for raw in raw_rows:
            vals = []
            for name, kind in schema.columns:
                if name not in positions:
                    vals.append(0.0 if kind == "numeric" else None)
                    continue
                v = raw[positions[name]] if positions[name] < len(raw) else ""
                if v == "":
                    vals.append(0.0 if name == schema.target else None)
                elif kind == "numeric":
                    vals.append(float(v))
                else:
                    vals.append(v)
            rows.append(tuple(vals))
    with _Stage("predict"):
        intervals = fitted.predict_intervals(rows)
        if intervals is None:
            point = fitted.predict_point(rows)
            intervals = np.column_stack([point, point, point])
    with _Stage("write"):
        out = args.output or "predictions.csv"
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write("lower,median,upper\n")
            for lo, med, hi in intervals:
                fh.write(f"{repr(float(lo))},{repr(float(med))},{repr(float(hi))}\n")
        print(f"{len(rows)} predictions written to {out}")
    return 0


def cmd_benchmark(args) -> int:
    with _Stage("config"):
        cfg = load_config(args.config)
        if args.threads:
            cfg.threads = args.threads
    with _Stage("ingest"):
        dataset = _load_dataset(cfg)
    with _Stage("feature-selection"):
        dataset = _apply_selection(dataset, cfg)
    with _Stage("benchmark"):
        names = cfg.models or list(MODEL_NAMES)
        unknown = [n for n in names if n not in MODEL_NAMES]
        if unknown:
            raise UserError(f"unknown models {unknown}; choose from {MODEL_NAMES}")
        # config model.grid applies when a single model is benchmarked;
        # otherwise every model runs its default grid
        grids = {names[0]: cfg.model.grid} if len(names) == 1 and cfg.model.grid else {}
        report = benchmark(
            dataset,
            names,
            grids=grids,
            k=cfg.cv.folds,
            seed=cfg.cv.seed,
            caps=cfg.pipeline.tail_caps or None,
            threads=cfg.threads,
        )
    with _Stage("write"):
        text = report.to_text()
        print(text, end="")
        if cfg.output.report_text:
            with open(cfg.output.report_text, "w", encoding="utf-8") as fh:
                fh.write(text)
        if cfg.output.report_json:
            with open(cfg.output.report_json, "w", encoding="utf-8") as fh:
                fh.write(report.to_json())
        if cfg.output.bounds_dir:
            os.makedirs(cfg.output.bounds_dir, exist_ok=True)
            for m in report.models:
                if m.bounds is None:
                    continue
                path = os.path.join(cfg.output.bounds_dir, f"bounds_{m.name}.csv")
                with open(path, "w", newline="", encoding="utf-8") as fh:
                    fh.write("lower,actual,upper\n")
                    for (lo, _, hi), actual in zip(m.bounds, m.bounds_actual):
                        fh.write(
                            f"{repr(float(lo))},{repr(float(actual))},{repr(float(hi))}\n"
                        )
    return 0


def cmd_synth(args) -> int:
    with _Stage("spec"):
        try:
            with open(args.spec, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise UserError(str(exc))
        except json.JSONDecodeError as exc:
            raise UserError(f"{args.spec}: invalid JSON ({exc})")
        for key in ("categories", "category_effects", "noise_scales", "base_durations", "target_coeffs", "category_probs"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        if "cascade_weights" in doc:
            doc["cascade_weights"] = tuple(tuple(row) for row in doc["cascade_weights"])
        try:
            spec = SyntheticSpec(**doc)
        except (TypeError, ValueError) as exc:
            raise UserError(f"invalid synthetic spec: {exc}")
    with _Stage("generate"):
        dataset = generate_synthetic(spec)
    with _Stage("write"):
        out = args.output or "synthetic.csv"
        write_dataset_csv(dataset, out)
        sidecar = out + ".truth.json"
        with open(sidecar, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(dataclasses.asdict(spec), indent=2, sort_keys=True) + "\n")
        print(f"{dataset.n_rows} rows written to {out}; ground truth in {sidecar}")
    return 0


def cmd_inspect(args) -> int:
    with _Stage("load-model"):
        fitted = load_model(args.model)
    schema = fitted.model.schema if hasattr(fitted, "model") else fitted.schema
    print(f"model: {DISPLAY_NAMES.get(fitted.name, fitted.name)} ({fitted.name})")
    print(f"target: {schema.target} [{schema.weight_units}]")
    print(f"params: {json.dumps(fitted.params, sort_keys=True)}")
    if hasattr(fitted, "model"):
        model = fitted.model
        print(f"kind: {model.kind}")
        if model.n_partitions is not None:
            print(f"partitions: {model.n_partitions}")
        print(f"quantile levels: {list(model.levels)}")
    count = fitted.parameter_count()
    print(f"parameter count: {'NA' if count is None else count}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partqr",
        description="Milestone completion-time forecasting with partitioned quantile regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="grid-search one model and write a model file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--threads", type=int, default=0)
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="prediction intervals for a CSV of rows")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--input", required=True)
    p_pred.add_argument("--output")
    p_pred.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser("benchmark", help="cross-validated model comparison table")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--threads", type=int, default=0)
    p_bench.set_defaults(func=cmd_benchmark)

    p_synth = sub.add_parser("synth", help="generate a synthetic cascading-delay dataset")
    p_synth.add_argument("--spec", required=True)
    p_synth.add_argument("--output")
    p_synth.set_defaults(func=cmd_synth)

    p_inspect = sub.add_parser("inspect", help="print a model file's structure")
    p_inspect.add_argument("--model", required=True)
    p_inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _StageError as exc:
        print(str(exc), file=sys.stderr)
        return 2 if exc.user else 1
    except ConfigError as exc:
        print(f"error in stage 'config': {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
