"""CPU-usage forecasting on Grid Workloads Archive VM traces.

Expects a directory of per-VM KPI traces (semicolon-delimited CSV with the
Materna column layout: "Timestamp [ms]", "CPU cores", "CPU usage [MHZ]", ...).
Builds hour/day-of-week categoricals plus three lags of the usage target and
compares the quantile tree against gradient boosting (or any model subset).

Download the Materna traces from the Grid Workloads Archive and point
--trace-dir at the extracted per-VM files.
"""

import argparse
import os
import sys

from partqr.evaluation import benchmark
from partqr.pipeline import build_gwa_dataset

DEFAULT_MODELS = ["quantile_tree", "gradient_boosting"]

GRIDS = {
    "quantile_tree": {"lam": [0.1, 1.0], "max_depth": [2, 4], "min_samples_split": [30]},
    "gradient_boosting": {"n_stages": [50, 100], "learning_rate": [0.1]},
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trace-dir", required=True, help="directory of per-VM trace CSVs")
    parser.add_argument("--max-vms", type=int, default=1, help="number of VM traces to ingest")
    parser.add_argument("--lags", type=int, default=3)
    parser.add_argument("--folds", type=int, default=3)
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument("--models", nargs="*", default=DEFAULT_MODELS)
    parser.add_argument("--report-json", default=None)
    args = parser.parse_args()

    if not os.path.isdir(args.trace_dir):
        print(f"trace directory not found: {args.trace_dir}", file=sys.stderr)
        return 2
    files = sorted(f for f in os.listdir(args.trace_dir) if f.endswith(".csv"))
    if not files:
        print(f"no .csv traces in {args.trace_dir}", file=sys.stderr)
        return 2
    paths = [os.path.join(args.trace_dir, f) for f in files[: args.max_vms]]
    dataset = build_gwa_dataset(paths, lag_count=args.lags)
    print(f"ingested {len(paths)} VM trace(s): {dataset.n_rows} rows, target in MHZ")

    report = benchmark(
        dataset,
        args.models,
        grids=GRIDS,
        k=args.folds,
        seed=args.seed,
    )
    print()
    print(report.to_text())
    if args.report_json:
        with open(args.report_json, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        print(f"JSON report written to {args.report_json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
