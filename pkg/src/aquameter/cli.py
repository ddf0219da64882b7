"""Command-line front end.

Subcommands: ``wue``, ``build``, ``estimate``, ``compare``, ``export``.

Settings may come from an INI config file (``--config`` or the
``AQUAMETER_CONFIG`` environment variable) with an ``[aquameter]`` section
whose keys are the long flag names with dashes replaced by underscores, e.g.::

    [aquameter]
    weather = data/weather.csv
    fuel_mix = data/fuel_mix.csv
    intensities = data/intensities.csv
    formula = coldwater
    coverage_threshold = 0.9
    us_offsite_wue = 4.35

Relative paths in the file are resolved against the file's directory. Flags
override the config file.

Exit codes: 0 success, 1 validation or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import AquameterError, ConfigError, DataWarning, MissingDataError
from .export import (
    dataset_gammas,
    export,
    footprint_records,
    load_dataset_series,
    write_dataset,
)
from .footprint import (
    BASELINES,
    ComparisonRow,
    EnergyRegistry,
    FootprintTables,
    builtin_energy_registry,
    compare,
    estimate,
    parse_energy_registry,
)
from .ingest import (
    builtin_pue_table,
    builtin_region_map,
    parse_fuel_mix,
    parse_keyed_values,
    parse_pue,
    parse_region_map,
    parse_water_intensity,
    parse_weather,
)
from .pipeline import DEFAULT_COVERAGE_THRESHOLD, build_dataset, monthly_means, regional_comparison
from .wue import Formula, WetBulbTemp, onsite_wue

PATH_KEYS = ("weather", "fuel_mix", "intensities", "pue", "energy", "carbon", "region_map", "gamma", "dataset")


@dataclass
class RunConfig:
    weather: Optional[Path] = None
    fuel_mix: Optional[Path] = None
    intensities: Optional[Path] = None
    pue: Optional[Path] = None
    energy: Optional[Path] = None
    carbon: Optional[Path] = None
    region_map: Optional[Path] = None
    gamma: Optional[Path] = None
    dataset: Optional[Path] = None
    formula: Formula = Formula.COLD_WATER
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD
    output: Optional[Path] = None
    format: str = "csv"
    us_offsite_wue: Optional[float] = None
    global_offsite_wue: Optional[float] = None

    def validate(self) -> "RunConfig":
        for key in PATH_KEYS:
            path = getattr(self, key)
            if path is None:
                continue
            if key == "dataset":
                if not path.is_dir():
                    raise ConfigError(f"{key}: {path} is not a directory")
            elif not path.is_file() or not os.access(path, os.R_OK):
                raise ConfigError(f"{key}: cannot read {path}")
        if not 0.0 < self.coverage_threshold <= 1.0:
            raise ConfigError(f"coverage_threshold must be in (0, 1], got {self.coverage_threshold}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        for key in ("us_offsite_wue", "global_offsite_wue"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigError(f"{key} must be >= 0")
        return self

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            flags = ", ".join("--" + k.replace("_", "-") for k in missing)
            raise ConfigError(f"missing required input(s): {flags}")


def _coerce(key: str, value, base: Optional[Path] = None):
    if value is None:
        return None
    if key in PATH_KEYS or key == "output":
        p = Path(value).expanduser()
        return p if base is None or p.is_absolute() else base / p
    if key == "formula":
        return Formula.parse(value)
    if key in ("coverage_threshold", "us_offsite_wue", "global_offsite_wue"):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if key == "format":
        return str(value).lower()
    return value


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file, then flags (flags win)."""
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    path = getattr(args, "config", None) or os.environ.get("AQUAMETER_CONFIG")
    if path:
        path = Path(path)
        parser = configparser.ConfigParser()
        try:
            with path.open(encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        if parser.has_section("aquameter"):
            for key, value in parser.items("aquameter"):
                if key not in known:
                    raise ConfigError(f"{path}: unknown config key {key!r}")
                values[key] = _coerce(key, value, path.parent)
    for key in known:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _coerce(key, flag)
    return RunConfig(**values).validate()


# --------------------------------------------------------------------------- commands


def cmd_wue(args) -> int:
    temp = WetBulbTemp(args.temp_f, "F") if args.temp_f is not None else WetBulbTemp(args.temp_c, "C")
    print(f"{onsite_wue(temp, args.formula or Formula.COLD_WATER).liters_per_kwh:.6f}")
    return 0


def cmd_build(args) -> int:
    cfg = load_config(args)
    cfg.require("weather", "fuel_mix", "intensities", "output")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DataWarning)
        records = parse_weather(cfg.weather)
        mix = parse_fuel_mix(cfg.fuel_mix)
        intensities = parse_water_intensity(cfg.intensities)
        region_map = parse_region_map(cfg.region_map) if cfg.region_map else builtin_region_map()
    ds = build_dataset(records, mix, intensities, cfg.formula, cfg.coverage_threshold, region_map)
    ds.warnings[:0] = [str(w.message) for w in caught if issubclass(w.category, DataWarning)]
    write_dataset(ds, cfg.output)

    print(f"formula: {ds.formula.value}")
    print(f"{'country':<8}{'records':>9}{'gap_hours':>11}{'onsite_mean':>14}{'offsite_mean':>14}")
    for code, data in sorted(ds.countries.items()):
        off = data.offsite.mean() if data.offsite is not None else float("nan")
        print(f"{code:<8}{len(data.series):>9}{data.gap_hours:>11}{data.series.mean():>14.6f}{off:>14.6f}")
    print(f"warnings: {len(ds.warnings)}")
    for msg in ds.warnings:
        print(f"  {msg}")
    print(f"wrote {cfg.output}")
    return 0


def _parse_hour_weights(text: str) -> list[float]:
    try:
        weights = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError("--hour-weights must be 24 comma-separated numbers") from None
    if len(weights) != 24:
        raise ConfigError(f"--hour-weights needs 24 values, got {len(weights)}")
    return weights


def _tables(cfg: RunConfig, args) -> FootprintTables:
    onsite: dict[str, float] = {}
    offsite: dict[str, float] = {}
    coupling = getattr(args, "coupling", "annual")
    if cfg.dataset is not None:
        onsite, offsite = dataset_gammas(cfg.dataset)
        if coupling == "hourly":
            if not args.hour_weights:
                raise ConfigError("--coupling hourly requires --hour-weights")
            weights = _parse_hour_weights(args.hour_weights)
            onsite = {c: s.hour_weighted_mean(weights) for c, s in load_dataset_series(cfg.dataset).items()}
    elif coupling == "hourly":
        raise ConfigError("--coupling hourly requires --dataset")
    if cfg.gamma is not None:
        for key, row in parse_keyed_values(cfg.gamma, ("gamma_on", "gamma_off")).items():
            if "gamma_on" in row:
                onsite[key] = row["gamma_on"]
            if "gamma_off" in row:
                offsite[key] = row["gamma_off"]
    if cfg.us_offsite_wue is not None:
        offsite["US"] = cfg.us_offsite_wue
    if cfg.global_offsite_wue is not None:
        offsite["GLOBAL"] = cfg.global_offsite_wue
    if not onsite and not offsite:
        raise ConfigError("no WUE inputs: pass --dataset and/or --gamma")

    pue = builtin_pue_table()
    if cfg.pue is not None:
        pue = pue.with_overrides(parse_pue(cfg.pue))
    registry: EnergyRegistry = builtin_energy_registry()
    if cfg.energy is not None:
        registry = registry.merged(parse_energy_registry(cfg.energy))
    carbon = {}
    if cfg.carbon is not None:
        carbon = {k: v["kg_per_kwh"] for k, v in parse_keyed_values(cfg.carbon, ("kg_per_kwh",)).items() if "kg_per_kwh" in v}
    return FootprintTables(onsite, offsite, pue, registry, carbon)


def _keys(text: Optional[str]) -> list[str]:
    if not text:
        return []
    return [k.strip().upper() for k in text.split(",") if k.strip()]


def _render(rows: list[dict], columns: Sequence[str]) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    table = [list(columns)] + [[cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(columns))]
    lines = ["  ".join(v.rjust(w) if i >= 4 else v.ljust(w) for i, (v, w) in enumerate(zip(row, widths))).rstrip() for row in table]
    notes = sorted({f"{r['model']}/{r['task']}" for r in rows if r.get("uncertainty")})
    for n in notes:
        lines.append(f"note: energy estimate for {n} has high uncertainty")
    return "\n".join(lines)


def _footprint_output(rows, args, columns) -> None:
    records = footprint_records(rows)
    if not any(r["carbon_kg"] is not None for r in records):
        columns = [c for c in columns if c != "carbon_kg"]
    print(_render(records, columns))
    if args.csv:
        export(rows, args.csv, "csv")
    if args.json:
        export(rows, args.json, "json")


def cmd_estimate(args) -> int:
    cfg = load_config(args)
    tables = _tables(cfg, args)
    keys = _keys(args.country)
    if not keys:
        raise ConfigError("--country is required")
    rows = [ComparisonRow(i, estimate(k, args.model, args.task, tables), None, None) for i, k in enumerate(keys, 1)]
    _footprint_output(rows, args, ["key", "model", "task", "onsite_l", "offsite_l", "total_l", "carbon_kg"])
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args)
    tables = _tables(cfg, args)
    keys = _keys(args.countries) or sorted(k for k in tables.offsite if k not in BASELINES)
    baselines = [] if args.baselines.strip().lower() == "none" else _keys(args.baselines)
    unknown = [b for b in baselines if b not in BASELINES]
    if unknown:
        raise ConfigError(f"unknown baseline(s) {', '.join(unknown)}; use us, global or none")
    rows = compare(keys, args.model, args.task, tables, baselines)
    _footprint_output(
        rows, args,
        ["rank", "key", "model", "task", "onsite_l", "offsite_l", "total_l", "carbon_kg", "vs_us", "vs_global"],
    )
    return 0


def cmd_export(args) -> int:
    cfg = load_config(args)
    cfg.require("dataset", "output")
    region_map = parse_region_map(cfg.region_map) if cfg.region_map else builtin_region_map()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DataWarning)
        series = load_dataset_series(cfg.dataset)
        aggregates = {c: monthly_means(s, cfg.coverage_threshold) for c, s in series.items()}
        comparison = regional_comparison(aggregates, region_map)
    flat = [a for c in sorted(aggregates) for a in aggregates[c]]
    out = cfg.output
    export(flat, out / f"monthly.{cfg.format}", cfg.format, region_map)
    export(comparison, out / f"regional_comparison.{cfg.format}", cfg.format)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    best = comparison.max_gap
    if best is not None:
        print(f"max regional gap: {best.gap * 100:.6f}% in {best.month} ({best.high_region} vs {best.low_region})")
    print(f"wrote {out}")
    return 0


# --------------------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file (default: $AQUAMETER_CONFIG)")


def _add_footprint_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model name, e.g. llama-3-70b or gpt-4")
    p.add_argument("--task", required=True, help="task name, e.g. report-10p or email")
    p.add_argument("--dataset", help="dataset directory written by 'build'")
    p.add_argument("--gamma", help="CSV key,gamma_on,gamma_off supplying WUE per country or baseline")
    p.add_argument("--pue", help="CSV region,pue overriding built-in PUE values")
    p.add_argument("--energy", help="CSV model,task,output_tokens,energy_wh,embedded_pue adding registry entries")
    p.add_argument("--carbon", help="CSV key,kg_per_kwh grid carbon intensities")
    p.add_argument("--us-offsite-wue", type=float, help="offsite WUE for the US baseline, L/kWh")
    p.add_argument("--global-offsite-wue", type=float, help="offsite WUE for the GLOBAL baseline, L/kWh")
    p.add_argument("--coupling", choices=["annual", "hourly"], default="annual",
                   help="onsite WUE coupling: annual mean (default) or hour-of-day weighted")
    p.add_argument("--hour-weights", help="24 comma-separated workload weights by UTC hour (with --coupling hourly)")
    p.add_argument("--csv", help="also write the table as CSV to this path")
    p.add_argument("--json", help="also write the table as JSON to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aquameter", description="Data-center WUE and LLM inference water footprint.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wue", help="evaluate onsite WUE at one wet-bulb temperature")
    temp = p.add_mutually_exclusive_group(required=True)
    temp.add_argument("--temp-f", type=float, help="wet-bulb temperature in Fahrenheit")
    temp.add_argument("--temp-c", type=float, help="wet-bulb temperature in Celsius")
    p.add_argument("--formula", choices=[f.value for f in Formula], default=Formula.COLD_WATER.value,
                   help="cooling tower configuration (default: coldwater)")
    p.set_defaults(func=cmd_wue)

    p = sub.add_parser("build", help="build the hourly WUE dataset from input files")
    _add_common(p)
    p.add_argument("--weather", help="hourly weather CSV")
    p.add_argument("--fuel-mix", help="fuel mix CSV")
    p.add_argument("--intensities", help="fuel water intensity CSV")
    p.add_argument("--region-map", help="CSV country,region (default: built-in climate regions)")
    p.add_argument("--formula", choices=[f.value for f in Formula], help="onsite formula (default: coldwater)")
    p.add_argument("--coverage-threshold", type=float, help="minimum monthly coverage to report a mean (default: 0.9)")
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("estimate", help="water footprint of one model/task in given countries")
    _add_common(p)
    _add_footprint_args(p)
    p.add_argument("--country", help="country code(s) or US/GLOBAL, comma-separated")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="rank countries and baselines by total water")
    _add_common(p)
    _add_footprint_args(p)
    p.add_argument("--countries", help="comma-separated country codes (default: all with offsite WUE)")
    p.add_argument("--baselines", default="us,global", help="baselines to include: us,global (default) or none")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="plot-ready monthly table and regional comparison from a dataset")
    _add_common(p)
    p.add_argument("--dataset", help="dataset directory written by 'build'")
    p.add_argument("--region-map", help="CSV country,region (default: built-in climate regions)")
    p.add_argument("--coverage-threshold", type=float, help="minimum monthly coverage (default: 0.9)")
    p.add_argument("--format", choices=["csv", "json"], help="output format (default: csv)")
    p.add_argument("--output", help="output directory")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AquameterError, OSError) as exc:
        message = exc.message if isinstance(exc, MissingDataError) else str(exc)
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
