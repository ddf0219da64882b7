"""Deterministic CSV / JSON serialization of computed artifacts.

Numbers are written with six decimals, CSV columns in a fixed order and JSON
keys sorted, so identical inputs give byte-identical files. Layout of a
dataset directory::

    onsite/<country>.csv         timestamp,country,formula,onsite_l_per_kwh
    offsite/<country>.csv        timestamp,country,year,offsite_l_per_kwh
    monthly.csv                  country,region,month,mean_onsite_l_per_kwh,coverage
    regional_comparison.csv      month,region,mean_onsite_l_per_kwh,n_countries,month_gap
    summary.json
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import IngestError, Issue, MissingDataError, ValidationError
from .footprint import ComparisonRow
from .ingest import Source, _read_rows, parse_utc_timestamp
from .pipeline import Dataset, MonthlyAggregate, OffsiteSeries, RegionalComparison, WueSeries
from .wue import Formula

DECIMALS = 6

SERIES_COLUMNS = ("timestamp", "country", "formula", "onsite_l_per_kwh")
OFFSITE_COLUMNS = ("timestamp", "country", "year", "offsite_l_per_kwh")
MONTHLY_COLUMNS = ("country", "region", "month", "mean_onsite_l_per_kwh", "coverage")
REGIONAL_COLUMNS = ("month", "region", "mean_onsite_l_per_kwh", "n_countries", "month_gap")
COMPARISON_COLUMNS = ("rank", "key", "model", "task", "onsite_l", "offsite_l", "total_l", "vs_us", "vs_global")


def fmt_number(x: Optional[float], decimals: Optional[int] = DECIMALS) -> str:
    if x is None:
        return ""
    if decimals is None:
        return repr(float(x))
    return f"{x:.{decimals}f}"


def rnd(x: Optional[float]) -> Optional[float]:
    # float(fmt_number(x)) == round(x, 6): JSON and CSV carry the same value
    return None if x is None else round(float(x), DECIMALS)


def _iso(t: np.datetime64) -> str:
    return str(t.astype("datetime64[s]")) + "Z"


def _iso_all(times: np.ndarray) -> list[str]:
    return [s + "Z" for s in np.datetime_as_string(times.astype("datetime64[s]"), unit="s").tolist()]


def _writer(stream: IO[str]):
    return csv.writer(stream, lineterminator="\n")


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------------- series


def write_series_csv(series: WueSeries, stream: IO[str], decimals: Optional[int] = DECIMALS) -> None:
    w = _writer(stream)
    w.writerow(SERIES_COLUMNS)
    formula = series.formula.value
    spec = "{!r}" if decimals is None else f"{{:.{decimals}f}}"
    w.writerows(
        (t, series.country, formula, spec.format(v))
        for t, v in zip(_iso_all(series.times), series.values.tolist())
    )


def read_series_csv(source: Source) -> WueSeries:
    """Re-ingest a file written by :func:`write_series_csv`."""
    name, header, rows, stream, owned = _read_rows(source)
    try:
        if tuple(header) != SERIES_COLUMNS:
            raise IngestError([Issue(name, 1, f"expected header {','.join(SERIES_COLUMNS)}")])
        countries, formulas, times, values, issues = set(), set(), [], [], []
        for line, row in rows:
            try:
                ts, country, formula, value = row
                times.append(int(parse_utc_timestamp(ts).timestamp()))
                values.append(float(value))
                countries.add(country)
                formulas.add(formula)
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
    finally:
        if owned:
            stream.close()
    if issues:
        raise IngestError(issues)
    if len(countries) > 1 or len(formulas) > 1:
        raise IngestError([Issue(name, 2, "series file mixes countries or formulas")])
    if not times:
        raise IngestError([Issue(name, 1, "series file has no rows")])
    return WueSeries(countries.pop(), Formula.parse(formulas.pop()), np.asarray(times, dtype="datetime64[s]"), values)


def write_offsite_csv(series: OffsiteSeries, stream: IO[str]) -> None:
    w = _writer(stream)
    w.writerow(OFFSITE_COLUMNS)
    spec = f"{{:.{DECIMALS}f}}"
    w.writerows(
        (t, series.country, y, spec.format(v))
        for t, y, v in zip(_iso_all(series.times), series.years.tolist(), series.values.tolist())
    )


# --------------------------------------------------------------------------- aggregates


def monthly_records(aggregates: Iterable[MonthlyAggregate], region_map: Mapping[str, str] = {}) -> list[dict]:
    return [
        {
            "country": a.country,
            "region": region_map.get(a.country, ""),
            "month": a.month,
            "mean_onsite_l_per_kwh": rnd(a.mean_onsite),
            "coverage": rnd(a.coverage),
        }
        for a in aggregates
    ]


def write_monthly_csv(aggregates: Iterable[MonthlyAggregate], stream: IO[str], region_map: Mapping[str, str] = {}) -> None:
    """Long-format, plot-ready monthly table. Suppressed means are left blank."""
    w = _writer(stream)
    w.writerow(MONTHLY_COLUMNS)
    for a in aggregates:
        w.writerow([a.country, region_map.get(a.country, ""), a.month, fmt_number(a.mean_onsite), fmt_number(a.coverage)])


def comparison_record(comp: RegionalComparison) -> dict:
    best = comp.max_gap
    return {
        "region_means": [
            {"month": r.month, "region": r.region, "mean_onsite_l_per_kwh": rnd(r.mean_onsite), "n_countries": r.n_countries}
            for r in comp.region_means
        ],
        "gaps": [
            {"month": g.month, "high_region": g.high_region, "low_region": g.low_region, "gap": rnd(g.gap)}
            for g in comp.gaps
        ],
        "max_gap": None if best is None else {
            "month": best.month, "high_region": best.high_region, "low_region": best.low_region, "gap": rnd(best.gap)
        },
        "excluded_regions": list(comp.excluded),
    }


def write_regional_csv(comp: RegionalComparison, stream: IO[str]) -> None:
    gaps = {g.month: g.gap for g in comp.gaps}
    w = _writer(stream)
    w.writerow(REGIONAL_COLUMNS)
    for r in comp.region_means:
        w.writerow([r.month, r.region, fmt_number(r.mean_onsite), r.n_countries, fmt_number(gaps.get(r.month))])


# --------------------------------------------------------------------------- footprint


def footprint_records(rows: Sequence[ComparisonRow]) -> list[dict]:
    return [
        {
            "rank": row.rank,
            "key": row.result.key,
            "model": row.result.model,
            "task": row.result.task,
            "onsite_l": rnd(row.result.onsite_l),
            "offsite_l": rnd(row.result.offsite_l),
            "total_l": rnd(row.result.total_l),
            "carbon_kg": rnd(row.result.carbon_kg),
            "uncertainty": row.result.uncertainty,
            "vs_us": row.vs_us,
            "vs_global": row.vs_global,
        }
        for row in rows
    ]


def write_footprint_csv(rows: Sequence[ComparisonRow], stream: IO[str]) -> None:
    w = _writer(stream)
    w.writerow(COMPARISON_COLUMNS)
    for row in rows:
        r = row.result
        w.writerow([
            row.rank, r.key, r.model, r.task,
            fmt_number(r.onsite_l), fmt_number(r.offsite_l), fmt_number(r.total_l),
            row.vs_us or "", row.vs_global or "",
        ])


# --------------------------------------------------------------------------- dispatch


def export(obj: Any, path: Union[str, Path], fmt: str = "csv", region_map: Mapping[str, str] = {}) -> Path:
    """Write a series, monthly aggregates, regional comparison or footprint table.

    ``fmt`` is ``"csv"`` or ``"json"``.
    """
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown export format {fmt!r}; expected csv or json")
    buf = io.StringIO()
    if isinstance(obj, WueSeries):
        if fmt == "csv":
            write_series_csv(obj, buf)
        else:
            buf.write(dumps_json({
                "country": obj.country,
                "formula": obj.formula.value,
                "points": [[_iso(t), rnd(v)] for t, v in zip(obj.times, obj.values.tolist())],
            }))
    elif isinstance(obj, RegionalComparison):
        if fmt == "csv":
            write_regional_csv(obj, buf)
        else:
            buf.write(dumps_json(comparison_record(obj)))
    elif isinstance(obj, (list, tuple)) and all(isinstance(a, MonthlyAggregate) for a in obj):
        if fmt == "csv":
            write_monthly_csv(obj, buf, region_map)
        else:
            buf.write(dumps_json(monthly_records(obj, region_map)))
    elif isinstance(obj, (list, tuple)) and all(isinstance(r, ComparisonRow) for r in obj):
        if fmt == "csv":
            write_footprint_csv(obj, buf)
        else:
            buf.write(dumps_json(footprint_records(obj)))
    else:
        raise ValidationError(f"don't know how to export {type(obj).__name__}")
    return _write_text(Path(path), buf.getvalue())


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _csv_text(writer, *args) -> str:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------- dataset


def dataset_summary(ds: Dataset) -> dict:
    countries = {}
    monthly = []
    for code, data in sorted(ds.countries.items()):
        s = data.series
        entry = {
            "region": ds.region_map.get(code),
            "records": len(s),
            "gap_hours": data.gap_hours,
            "first": _iso(s.times[0]) if len(s) else None,
            "last": _iso(s.times[-1]) if len(s) else None,
            "onsite_mean_l_per_kwh": rnd(s.mean()) if len(s) else None,
            "onsite_min_l_per_kwh": rnd(float(s.values.min())) if len(s) else None,
            "onsite_max_l_per_kwh": rnd(float(s.values.max())) if len(s) else None,
            "offsite_mean_l_per_kwh": rnd(data.offsite.mean()) if data.offsite is not None and len(data.offsite) else None,
            "offsite": [
                {
                    "year": off.year,
                    "gamma_off_l_per_kwh": rnd(off.gamma_off),
                    "fuel_breakdown": [
                        {"fuel": f.fuel, "share": rnd(f.share), "intensity_l_per_kwh": rnd(f.intensity)}
                        for f in off.fuel_breakdown
                    ],
                }
                for off in data.offsite_years.values()
            ],
        }
        countries[code] = entry
        monthly.extend(monthly_records(data.monthly, ds.region_map))
    return {
        "formula": ds.formula.value,
        "coverage_threshold": ds.coverage_threshold,
        "countries": countries,
        "monthly": monthly,
        "regional_comparison": comparison_record(ds.comparison) if ds.comparison is not None else None,
        "warnings": list(ds.warnings),
    }


def write_dataset(ds: Dataset, outdir: Union[str, Path]) -> list[Path]:
    """Write the full dataset layout under ``outdir``; returns files written."""
    outdir = Path(outdir)
    written = []
    for code, data in sorted(ds.countries.items()):
        written.append(_write_text(outdir / "onsite" / f"{code}.csv", _csv_text(write_series_csv, data.series)))
        if data.offsite is not None:
            written.append(_write_text(outdir / "offsite" / f"{code}.csv", _csv_text(write_offsite_csv, data.offsite)))
    aggs = [a for data in (ds.countries[c] for c in sorted(ds.countries)) for a in data.monthly]
    buf = io.StringIO()
    write_monthly_csv(aggs, buf, ds.region_map)
    written.append(_write_text(outdir / "monthly.csv", buf.getvalue()))
    if ds.comparison is not None:
        written.append(_write_text(outdir / "regional_comparison.csv", _csv_text(write_regional_csv, ds.comparison)))
    written.append(_write_text(outdir / "summary.json", dumps_json(dataset_summary(ds))))
    return written


def load_summary(outdir: Union[str, Path]) -> dict:
    path = Path(outdir) / "summary.json"
    try:
        with path.open(encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise MissingDataError(f"no summary.json in {outdir}") from None


def load_dataset_series(outdir: Union[str, Path]) -> dict[str, WueSeries]:
    onsite = Path(outdir) / "onsite"
    if not onsite.is_dir():
        raise MissingDataError(f"no onsite/ directory in {outdir}")
    return {p.stem: read_series_csv(p) for p in sorted(onsite.glob("*.csv"))}


def dataset_gammas(outdir: Union[str, Path]) -> tuple[dict[str, float], dict[str, float]]:
    """Annual-mean onsite and offsite WUE per country from a built dataset."""
    summary = load_summary(outdir)
    onsite, offsite = {}, {}
    for code, entry in summary.get("countries", {}).items():
        if entry.get("onsite_mean_l_per_kwh") is not None:
            onsite[code] = entry["onsite_mean_l_per_kwh"]
        if entry.get("offsite_mean_l_per_kwh") is not None:
            offsite[code] = entry["offsite_mean_l_per_kwh"]
    return onsite, offsite
