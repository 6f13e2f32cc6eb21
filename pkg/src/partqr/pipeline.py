"""Preprocessing: date/zip/climate features, milestone wrangling, feature
selection, lag construction, imputation, and trace ingestion.

Everything here is a pure transformation; statistics that could leak (medians,
caps) are learned from training rows only and applied elsewhere.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from datetime import date, datetime, timezone

import numpy as np
from scipy.stats import chi2

from .data import Dataset, FeatureSchema


@dataclass(frozen=True)
class MilestoneRecord:
    """One milestone row from a rollout export; actual_date is None while open."""

    project_id: str
    site_id: str
    milestone: str
    phase: str | None = None
    planned_date: date | None = None
    actual_date: date | None = None
    city: str | None = None
    state: str | None = None
    region: str | None = None
    market: str | None = None
    latitude: float | None = None
    longitude: float | None = None
    zip_code: str | None = None
    nature: str | None = None
    technology: str | None = None


def parse_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value).strip())
    except ValueError as exc:
        raise ValueError(f"unparseable date {value!r}") from exc


def derive_date_features(value) -> tuple[int, int, int]:
    """(month 1-12, quarter 1-4, year) of a calendar date."""
    d = parse_date(value)
    return d.month, (d.month + 2) // 3, d.year


def zip_region(zip_code: str) -> str:
    """First two characters of a zip/postal code; short codes pass through."""
    z = str(zip_code)
    if not z:
        raise ValueError("empty zip code")
    return z[:2]


def load_climate_table(path) -> dict[str, str]:
    """CSV with header region,climate (extra columns rejected as malformed)."""
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["region", "climate"]:
            raise ValueError(f"{path}: expected header 'region,climate'")
        for row in reader:
            if len(row) != 2:
                raise ValueError(f"{path}: malformed row {row!r}")
            table[row[0]] = row[1]
    return table


def attach_climate(region: str | None, table: dict[str, str]) -> str:
    if region is None:
        return "unknown"
    return table.get(region, "unknown")


@dataclass
class ExclusionReport:
    """Counts of projects silently skipped while building duration rows."""

    missing_milestone: int = 0
    ordering_violation: int = 0

    @property
    def total(self) -> int:
        return self.missing_milestone + self.ordering_violation


def _projects_by_id(records) -> dict[str, list[MilestoneRecord]]:
    grouped: dict[str, list[MilestoneRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.project_id, []).append(rec)
    return grouped


def _dated(recs) -> dict[str, date]:
    """First dated occurrence per milestone name within a project."""
    out: dict[str, date] = {}
    for rec in recs:
        if rec.actual_date is not None and rec.milestone not in out:
            out[rec.milestone] = rec.actual_date
    return out


def intermediate_durations(
    records,
    source: str,
    intermediates: list[str],
    target: str,
) -> tuple[list[tuple], ExclusionReport]:
    """Per project: days from source to each intermediate, and to the target.

    Projects missing any listed milestone are skipped; so are projects where
    an intermediate completes after the target (ordering violation). Skips are
    silent but counted.
    """
    report = ExclusionReport()
    rows = []
    for _, recs in sorted(_projects_by_id(records).items()):
        dates = _dated(recs)
        needed = [source, *intermediates, target]
        if any(m not in dates for m in needed):
            report.missing_milestone += 1
            continue
        if any(dates[m] > dates[target] for m in intermediates):
            report.ordering_violation += 1
            continue
        feats = tuple(float((dates[m] - dates[source]).days) for m in intermediates)
        rows.append(feats + (float((dates[target] - dates[source]).days),))
    return rows, report


def prune_tail(dataset: Dataset, column: str, cap: float) -> tuple[Dataset, int]:
    """Drop training rows whose column value exceeds the cap (rows are removed,
    never clipped, so quantile fits stay unbiased)."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    j = dataset.schema.index_of(column)
    kept = [row for row in dataset.rows if row[j] is None or float(row[j]) <= cap]
    removed = dataset.n_rows - len(kept)
    if not kept:
        warnings.warn(f"prune_tail removed every row of {column!r} (cap={cap})")
    return Dataset(dataset.schema, tuple(kept)), removed


def _average_ranks(values: list[date]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def rank_milestones(records) -> dict[str, list[str]]:
    """Typical milestone ordering per phase: sort by mean within-project rank
    of the completion date, ties broken by name."""
    any_dated = False
    per_phase: dict[str, dict[str, list[float]]] = {}
    for _, recs in sorted(_projects_by_id(records).items()):
        by_phase: dict[str, list[MilestoneRecord]] = {}
        for rec in recs:
            if rec.actual_date is None:
                continue
            any_dated = True
            by_phase.setdefault(rec.phase or "", []).append(rec)
        for phase, phase_recs in by_phase.items():
            dates = _dated(phase_recs)
            names = sorted(dates)
            ranks = _average_ranks([dates[m] for m in names])
            bucket = per_phase.setdefault(phase, {})
            for name, rank in zip(names, ranks):
                bucket.setdefault(name, []).append(rank)
    if not any_dated:
        raise ValueError("no dated milestones")
    return {
        phase: sorted(stats, key=lambda m: (float(np.mean(stats[m])), m))
        for phase, stats in sorted(per_phase.items())
    }


@dataclass
class GapMatrix:
    """Aggregated day gaps between milestone pairs; cell (i, j) is j minus i."""

    milestones: tuple[str, ...]
    mean_days: np.ndarray
    median_days: np.ndarray
    support: np.ndarray

    def cell(self, a: str, b: str) -> tuple[float, float, int]:
        i = self.milestones.index(a)
        j = self.milestones.index(b)
        return (
            float(self.mean_days[i, j]),
            float(self.median_days[i, j]),
            int(self.support[i, j]),
        )


def gap_matrix(records) -> GapMatrix:
    names = sorted({rec.milestone for rec in records})
    m = len(names)
    pos = {name: i for i, name in enumerate(names)}
    gaps: dict[tuple[int, int], list[float]] = {}
    for _, recs in _projects_by_id(records).items():
        dates = _dated(recs)
        present = [n for n in names if n in dates]
        for a in present:
            for b in present:
                gaps.setdefault((pos[a], pos[b]), []).append(
                    float((dates[b] - dates[a]).days)
                )
    mean = np.full((m, m), np.nan)
    median = np.full((m, m), np.nan)
    support = np.zeros((m, m), dtype=int)
    for (i, j), vals in gaps.items():
        mean[i, j] = float(np.mean(vals))
        median[i, j] = float(np.median(vals))
        support[i, j] = len(vals)
    return GapMatrix(tuple(names), mean, median, support)


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx, sy = np.std(x), np.std(y)
    if sx == 0 or sy == 0:
        return float("nan")
    return float(np.mean((x - np.mean(x)) * (y - np.mean(y))) / (sx * sy))


def select_numeric(dataset: Dataset, target: str, threshold: float) -> list[str]:
    """Keep numeric predictors with |Pearson r| vs target at or above the
    threshold; zero-variance columns have undefined r and are dropped."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    y = np.array([float(v) for v in dataset.column(target)])
    kept = []
    for name in dataset.schema.numeric_predictors():
        col = np.array([float(v) for v in dataset.column(name)])
        r = pearson_r(col, y)
        if not np.isnan(r) and abs(r) >= threshold:
            kept.append(name)
    return kept


def chi_square_statistic(table: np.ndarray) -> tuple[float, int, float]:
    """(statistic, dof, p) for an observed contingency table; all-zero rows
    and columns are dropped so no expected count is zero."""
    table = np.asarray(table, dtype=float)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    if r < 2 or c < 2:
        return 0.0, 0, 1.0
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    stat = float(np.sum((table - expected) ** 2 / expected))
    dof = (r - 1) * (c - 1)
    return stat, dof, float(chi2.sf(stat, dof))


def quartile_bins(y) -> np.ndarray:
    """Quartile bin index per value (0..3, fewer when quartiles coincide)."""
    y = np.asarray(y, dtype=float)
    edges = np.unique(np.quantile(y, [0.25, 0.5, 0.75]))
    return np.searchsorted(edges, y, side="left")


def select_categorical(dataset: Dataset, target: str, p_threshold: float = 0.05) -> list[str]:
    """Chi-square screen of categorical predictors against target quartiles."""
    y = np.array([float(v) for v in dataset.column(target)])
    bins = quartile_bins(y)
    n_bins = int(bins.max()) + 1
    kept = []
    for name in dataset.schema.categorical_predictors():
        col = [str(v) for v in dataset.column(name)]
        levels = sorted(set(col))
        if len(levels) < 2:
            continue
        index = {lv: i for i, lv in enumerate(levels)}
        table = np.zeros((len(levels), n_bins))
        for v, b in zip(col, bins):
            table[index[v], b] += 1
        _, dof, p = chi_square_statistic(table)
        if dof > 0 and p < p_threshold:
            kept.append(name)
    return kept


def lag_features(values, lag_count: int) -> list[tuple]:
    """Rows (y_{t-1}, ..., y_{t-L}, y_t) for t > L; the first L rows drop out."""
    if lag_count < 1:
        raise ValueError("lag_count must be at least 1")
    vals = [float(v) for v in values]
    if len(vals) <= lag_count:
        raise ValueError(f"series of length {len(vals)} too short for {lag_count} lags")
    rows = []
    for t in range(lag_count, len(vals)):
        lags = tuple(vals[t - i] for i in range(1, lag_count + 1))
        rows.append(lags + (vals[t],))
    return rows


@dataclass(frozen=True)
class Imputer:
    """Fold-safe imputation: numeric gaps take the training median, categorical
    gaps become the level "missing", all-missing columns are dropped."""

    numeric_fill: dict[str, float]
    dropped_columns: tuple[str, ...]
    dropped_target_rows: int = 0

    def transform(self, dataset: Dataset) -> Dataset:
        schema = dataset.schema
        keep = [
            (name, kind)
            for name, kind in schema.columns
            if name not in self.dropped_columns
        ]
        new_schema = FeatureSchema(tuple(keep), schema.target, schema.weight_units)
        target_j = schema.index_of(schema.target)
        rows = []
        for row in dataset.rows:
            if row[target_j] is None:
                continue
            vals = []
            for name, kind in keep:
                v = row[schema.index_of(name)]
                if v is None:
                    v = self.numeric_fill[name] if kind == "numeric" else "missing"
                vals.append(v)
            rows.append(tuple(vals))
        return Dataset(new_schema, tuple(rows))


def fit_imputer(dataset: Dataset) -> Imputer:
    schema = dataset.schema
    fill: dict[str, float] = {}
    dropped: list[str] = []
    for name, kind in schema.columns:
        if name == schema.target:
            continue
        values = [v for v in dataset.column(name) if v is not None]
        if not values:
            dropped.append(name)
            warnings.warn(f"column {name!r} is entirely missing; dropping it")
            continue
        if kind == "numeric":
            fill[name] = float(np.median([float(v) for v in values]))
    n_missing_target = sum(1 for v in dataset.column(schema.target) if v is None)
    return Imputer(
        numeric_fill=fill,
        dropped_columns=tuple(dropped),
        dropped_target_rows=n_missing_target,
    )


def impute(dataset: Dataset) -> Dataset:
    """Fit-and-apply convenience; cross-validation fits on the training fold
    and applies the same imputer to the test fold instead."""
    return fit_imputer(dataset).transform(dataset)


MILESTONE_CSV_COLUMNS = (
    "project_id",
    "site_id",
    "milestone",
    "phase",
    "planned_date",
    "actual_date",
    "city",
    "state",
    "region",
    "market",
    "latitude",
    "longitude",
    "zip",
    "nature",
    "technology",
)


def read_milestone_csv(path, delimiter: str = ",") -> list[MilestoneRecord]:
    """Load milestone records; only project_id/site_id/milestone are mandatory."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        required = {"project_id", "site_id", "milestone"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        records = []
        for row in reader:
            def get(key):
                v = row.get(key, "")
                return v if v not in ("", None) else None

            records.append(
                MilestoneRecord(
                    project_id=row["project_id"],
                    site_id=row["site_id"],
                    milestone=row["milestone"],
                    phase=get("phase"),
                    planned_date=parse_date(get("planned_date")) if get("planned_date") else None,
                    actual_date=parse_date(get("actual_date")) if get("actual_date") else None,
                    city=get("city"),
                    state=get("state"),
                    region=get("region"),
                    market=get("market"),
                    latitude=float(get("latitude")) if get("latitude") else None,
                    longitude=float(get("longitude")) if get("longitude") else None,
                    zip_code=get("zip"),
                    nature=get("nature"),
                    technology=get("technology"),
                )
            )
    return records


def build_milestone_dataset(
    records,
    source: str,
    intermediates: list[str],
    target: str,
    climate_table: dict[str, str] | None = None,
) -> tuple[Dataset, ExclusionReport]:
    """Assemble the modeling table for one (source, target) milestone pair:
    site attributes, date/zip/climate features of the source completion, and
    intermediate durations in days."""
    report = ExclusionReport()
    columns: list[tuple[str, str]] = [("project_id", "identifier")]
    cat_cols = ["city", "state", "region", "market", "zip2", "climate", "month", "quarter", "year"]
    columns += [(c, "categorical") for c in cat_cols]
    columns += [("latitude", "numeric"), ("longitude", "numeric")]
    columns += [(f"{m}_days", "numeric") for m in intermediates]
    columns += [("target_days", "numeric")]
    rows = []
    for project_id, recs in sorted(_projects_by_id(records).items()):
        dates = _dated(recs)
        needed = [source, *intermediates, target]
        if any(m not in dates for m in needed):
            report.missing_milestone += 1
            continue
        if any(dates[m] > dates[target] for m in intermediates):
            report.ordering_violation += 1
            continue
        site = recs[0]
        month, quarter, year = derive_date_features(dates[source])
        row = [
            project_id,
            site.city,
            site.state,
            site.region,
            site.market,
            zip_region(site.zip_code) if site.zip_code else None,
            attach_climate(site.state or site.region, climate_table or {}),
            str(month),
            str(quarter),
            str(year),
            site.latitude,
            site.longitude,
        ]
        row += [float((dates[m] - dates[source]).days) for m in intermediates]
        row.append(float((dates[target] - dates[source]).days))
        rows.append(tuple(row))
    schema = FeatureSchema(tuple(columns), target="target_days", weight_units="days")
    return Dataset(schema, tuple(rows)), report


GWA_NUMERIC_COLUMNS = (
    "CPU capacity provisioned [MHZ]",
    "Memory capacity provisioned [KB]",
    "Memory usage [KB]",
    "Disk read throughput [KB/s]",
    "Disk write throughput [KB/s]",
    "Network received throughput [KB/s]",
    "Network transmitted throughput [KB/s]",
)
GWA_TARGET = "CPU usage [MHZ]"
GWA_TIMESTAMP = "Timestamp [ms]"
GWA_CORES = "CPU cores"


def read_gwa_trace(path, delimiter: str = ";") -> dict[str, list]:
    """One VM KPI trace as {column: values}; numeric columns parsed to float."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = [h.strip() for h in next(reader)]
        if GWA_TIMESTAMP not in header or GWA_TARGET not in header:
            raise ValueError(f"{path}: not a KPI trace (missing timestamp or target)")
        data: dict[str, list] = {h: [] for h in header}
        for row in reader:
            if not row or all(v.strip() == "" for v in row):
                continue
            for h, v in zip(header, row):
                v = v.strip()
                data[h].append(float(v) if v not in ("",) else None)
    return data


def build_gwa_dataset(paths, lag_count: int = 3, delimiter: str = ";") -> Dataset:
    """Per-VM modeling rows: KPI columns, hour/day-of-week and core count as
    categoricals, and lag_count lags of the usage target. Lags never cross a
    VM boundary (each trace file is one VM)."""
    columns: list[tuple[str, str]] = [("vm", "identifier")]
    columns += [("hour_of_day", "categorical"), ("day_of_week", "categorical")]
    columns += [(GWA_CORES, "categorical")]
    numeric_present: list[str] | None = None
    all_rows = []
    for path in paths:
        data = read_gwa_trace(path, delimiter=delimiter)
        present = [c for c in GWA_NUMERIC_COLUMNS if c in data]
        if numeric_present is None:
            numeric_present = present
        else:
            numeric_present = [c for c in numeric_present if c in present]
        target_vals = data[GWA_TARGET]
        if len(target_vals) <= lag_count:
            continue
        stamps = data[GWA_TIMESTAMP]
        for t in range(lag_count, len(target_vals)):
            dt = datetime.fromtimestamp(stamps[t] / 1000.0, tz=timezone.utc)
            row = [
                str(path),
                str(dt.hour),
                str(dt.weekday()),
                None if data.get(GWA_CORES, [None])[t] is None else str(int(data[GWA_CORES][t])),
            ]
            row += [data[c][t] for c in present]
            row += [target_vals[t - i] for i in range(1, lag_count + 1)]
            row.append(target_vals[t])
            all_rows.append((present, tuple(row)))
    if numeric_present is None or not all_rows:
        raise ValueError("no usable trace rows")
    columns += [(c, "numeric") for c in numeric_present]
    columns += [(f"usage_lag_{i}", "numeric") for i in range(1, lag_count + 1)]
    columns += [("usage", "numeric")]
    # Re-project rows onto the common numeric column set.
    fixed_rows = []
    for present, row in all_rows:
        head = row[:4]
        kpis = dict(zip(present, row[4 : 4 + len(present)]))
        tail = row[4 + len(present) :]
        fixed_rows.append(head + tuple(kpis[c] for c in numeric_present) + tail)
    schema = FeatureSchema(tuple(columns), target="usage", weight_units="MHZ")
    return Dataset(schema, tuple(fixed_rows))
