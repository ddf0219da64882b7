"""CSV ingestion for weather, fuel mix, water intensity, PUE and region tables.

Every parser reads the whole stream, collects every bad row with its line
number, and raises a single :class:`IngestError` if anything failed. Nothing
is dropped silently. Parsed tables are treated as read-only.

File formats (first line is the header)::

    weather      timestamp,country,wet_bulb_c|wet_bulb_f,humidity,precip_mm
    fuel mix     country,year,fuel,generation   (or share instead of generation)
    intensity    fuel,l_per_kwh
    PUE          region,pue
    region map   country,region
"""

from __future__ import annotations

import csv
import functools
import io
import math
import re
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Optional, Union

from .errors import DataWarning, IngestError, Issue, MissingDataError, ValidationError
from .wue import FuelContribution, T_MAX_F, T_MIN_F, WetBulbTemp

Source = Union[str, Path, IO[str]]

SHARE_TOLERANCE = (0.98, 1.02)
BASELINE_REGIONS = ("US", "GLOBAL")

_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")


def _open(source: Source) -> tuple[IO[str], str, bool]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        return path.open("r", encoding="utf-8", newline=""), str(path), True
    return source, getattr(source, "name", "<stream>"), False


def _read_rows(source: Source) -> tuple[str, list[str], Iterator[tuple[int, list[str]]], IO[str], bool]:
    stream, name, owned = _open(source)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        header = []
    header = [h.strip().lstrip("﻿") for h in header]

    def rows():
        for row in reader:
            # cheap first-cell test before scanning the whole row
            if not row or (not row[0].strip() and all(not cell.strip() for cell in row)):
                continue
            yield reader.line_num, row

    return name, header, rows(), stream, owned


def _finite(text: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{what} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {text!r}")
    return value


@functools.lru_cache(maxsize=1024)
def _country(text: str) -> str:
    code = text.strip().upper()
    if not _COUNTRY_RE.match(code):
        raise ValueError(f"country must be an ISO 3166-1 alpha-2 code, got {text!r}")
    return code


def _region_key(text: str) -> str:
    key = text.strip().upper()
    if key in BASELINE_REGIONS:
        return key
    return _country(key)


@functools.lru_cache(maxsize=1 << 16)
def parse_utc_timestamp(text: str) -> datetime:
    """Parse an ISO 8601 timestamp that must carry a UTC designator and fall on the hour."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise ValueError(f"unparseable timestamp {text!r}") from None
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC designator")
    if ts.utcoffset() != timedelta(0):
        raise ValueError(f"timestamp {text!r} is not UTC")
    if ts.minute or ts.second or ts.microsecond:
        raise ValueError(f"timestamp {text!r} is not on the hour")
    return ts.astimezone(timezone.utc)


def format_utc_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------- weather


@dataclass(frozen=True, slots=True)
class HourlyWeatherRecord:
    """One hourly observation for a country's capital, wet-bulb in degrees F."""

    timestamp: datetime
    country: str
    wet_bulb_f: float
    humidity: Optional[float] = None
    precipitation: Optional[float] = None

    @property
    def wet_bulb(self) -> WetBulbTemp:
        return WetBulbTemp(self.wet_bulb_f, "F")


WEATHER_COLUMNS = ("timestamp", "country", "humidity", "precip_mm")


def parse_weather(source: Source) -> list[HourlyWeatherRecord]:
    """Parse an hourly weather CSV into records sorted by (country, timestamp).

    Exactly one of ``wet_bulb_c`` / ``wet_bulb_f`` must be present; Celsius is
    converted to Fahrenheit here. Within a country, timestamps must be strictly
    increasing in file order. Gaps are allowed.
    """
    name, header, rows, stream, owned = _read_rows(source)
    try:
        issues: list[Issue] = []
        missing = [c for c in ("timestamp", "country") if c not in header]
        temp_cols = [c for c in ("wet_bulb_c", "wet_bulb_f") if c in header]
        if missing:
            issues.append(Issue(name, 1, f"missing required column(s): {', '.join(missing)}"))
        if len(temp_cols) != 1:
            issues.append(Issue(name, 1, "exactly one of wet_bulb_c or wet_bulb_f is required"))
        if issues:
            raise IngestError(issues)

        col = {c: i for i, c in enumerate(header)}
        i_ts, i_cc, i_t = col["timestamp"], col["country"], col[temp_cols[0]]
        i_hum, i_pr = col.get("humidity"), col.get("precip_mm")
        celsius = temp_cols[0] == "wet_bulb_c"

        records: list[HourlyWeatherRecord] = []
        # country -> (timestamp, line) of the previous accepted row
        last: dict[str, tuple[datetime, int]] = {}
        for line, row in rows:
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            try:
                ts = parse_utc_timestamp(row[i_ts])
                country = _country(row[i_cc])
                t = _finite(row[i_t], "wet-bulb temperature")
                t_f = t * 9.0 / 5.0 + 32.0 if celsius else t
                if not T_MIN_F <= t_f <= T_MAX_F:
                    raise ValueError(
                        f"wet-bulb temperature {t_f:g} F outside plausible range [{T_MIN_F:g}, {T_MAX_F:g}] F"
                    )
                humidity = precip = None
                if i_hum is not None and row[i_hum].strip():
                    humidity = _finite(row[i_hum], "humidity")
                    if not 0.0 <= humidity <= 100.0:
                        raise ValueError(f"humidity {humidity:g}% outside [0, 100]")
                if i_pr is not None and row[i_pr].strip():
                    precip = _finite(row[i_pr], "precipitation")
                    if precip < 0:
                        raise ValueError(f"precipitation {precip:g} mm is negative")
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue

            prev = last.get(country)
            if prev is not None and ts <= prev[0]:
                if ts == prev[0]:
                    reason = f"duplicate timestamp {format_utc_timestamp(ts)} for {country} (also on line {prev[1]})"
                else:
                    reason = (
                        f"timestamp {format_utc_timestamp(ts)} for {country} is not after "
                        f"{format_utc_timestamp(prev[0])} on line {prev[1]}"
                    )
                issues.append(Issue(name, line, reason))
                continue
            last[country] = (ts, line)
            records.append(HourlyWeatherRecord(ts, country, t_f, humidity, precip))
    finally:
        if owned:
            stream.close()

    if issues:
        raise IngestError(issues)
    if not records:
        warnings.warn(f"{name}: no weather records", DataWarning, stacklevel=2)
    records.sort(key=lambda r: (r.country, r.timestamp))
    return records


def write_weather(records: Iterable[HourlyWeatherRecord], stream: IO[str]) -> None:
    """Serialize records in the Fahrenheit weather format (exact float repr)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["timestamp", "country", "wet_bulb_f", "humidity", "precip_mm"])
    for r in records:
        writer.writerow([
            format_utc_timestamp(r.timestamp),
            r.country,
            repr(r.wet_bulb_f),
            "" if r.humidity is None else repr(r.humidity),
            "" if r.precipitation is None else repr(r.precipitation),
        ])


def weather_gaps(records: Iterable[HourlyWeatherRecord]) -> dict[str, int]:
    """Missing hours between each country's first and last record."""
    spans: dict[str, list] = {}
    for r in records:
        span = spans.setdefault(r.country, [r.timestamp, r.timestamp, 0])
        span[0] = min(span[0], r.timestamp)
        span[1] = max(span[1], r.timestamp)
        span[2] += 1
    return {
        country: int((last - first).total_seconds() // 3600) + 1 - count
        for country, (first, last, count) in sorted(spans.items())
    }


# --------------------------------------------------------------------------- fuel mix


@dataclass(frozen=True)
class FuelMixTable:
    """Per (country, year) electricity generation by fuel.

    ``kind`` is ``"generation"`` for absolute amounts or ``"share"`` for
    fractions; the weighted-mean offsite WUE does not care which.
    """

    entries: Mapping[tuple[str, int], tuple[tuple[str, float], ...]]
    kind: str = "generation"

    def __getitem__(self, key: tuple[str, int]) -> tuple[tuple[str, float], ...]:
        country, year = key
        try:
            return self.entries[(country, int(year))]
        except KeyError:
            raise MissingDataError(f"no fuel mix for country {country} year {year}") from None

    def __contains__(self, key) -> bool:
        return key in self.entries

    def countries(self) -> list[str]:
        return sorted({c for c, _ in self.entries})

    def years(self, country: str) -> list[int]:
        return sorted(y for c, y in self.entries if c == country)

    def year_for(self, country: str, year: int) -> int:
        """The requested year if present, else the latest earlier year on file."""
        years = [y for y in self.years(country) if y <= year]
        if not years:
            raise MissingDataError(f"no fuel mix for country {country} in or before {year}")
        return years[-1]

    def fuels(self) -> set[str]:
        return {fuel for mix in self.entries.values() for fuel, _ in mix}


def parse_fuel_mix(source: Source) -> FuelMixTable:
    name, header, rows, stream, owned = _read_rows(source)
    try:
        issues: list[Issue] = []
        missing = [c for c in ("country", "year", "fuel") if c not in header]
        amount_cols = [c for c in ("generation", "share") if c in header]
        if missing:
            issues.append(Issue(name, 1, f"missing required column(s): {', '.join(missing)}"))
        if len(amount_cols) == 0:
            issues.append(Issue(name, 1, "one of generation or share is required"))
        elif len(amount_cols) == 2:
            issues.append(Issue(name, 1, "generation and share cannot be mixed in one file"))
        if issues:
            raise IngestError(issues)

        kind = amount_cols[0]
        col = {c: i for i, c in enumerate(header)}
        raw: dict[tuple[str, int], list[tuple[str, float]]] = {}
        first_line: dict[tuple[str, int], int] = {}
        seen: dict[tuple[str, int, str], int] = {}
        for line, row in rows:
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            try:
                country = _country(row[col["country"]])
                try:
                    year = int(row[col["year"]].strip())
                except ValueError:
                    raise ValueError(f"year is not an integer: {row[col['year']]!r}") from None
                fuel = row[col["fuel"]].strip()
                if not fuel:
                    raise ValueError("fuel is empty")
                amount = _finite(row[col[kind]], kind)
                if amount < 0:
                    raise ValueError(f"{kind} for {fuel} must be >= 0, got {amount:g}")
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue
            key = (country, year, fuel)
            if key in seen:
                issues.append(Issue(name, line, f"duplicate fuel {fuel} for {country} {year} (also on line {seen[key]})"))
                continue
            seen[key] = line
            raw.setdefault((country, year), []).append((fuel, amount))
            first_line.setdefault((country, year), line)
    finally:
        if owned:
            stream.close()

    lo, hi = SHARE_TOLERANCE
    for key, mix in raw.items():
        line = first_line[key]
        total = math.fsum(a for _, a in mix)
        if total <= 0:
            issues.append(Issue(name, line, f"{key[0]} {key[1]}: no fuel with positive {kind}"))
        elif kind == "share" and not lo <= total <= hi:
            issues.append(Issue(name, line, f"{key[0]} {key[1]}: shares sum to {total:.6g}, outside [{lo}, {hi}]"))
    if issues:
        raise IngestError(sorted(issues, key=lambda i: i.line))
    if not raw:
        warnings.warn(f"{name}: no fuel mix rows", DataWarning, stacklevel=2)
    return FuelMixTable({k: tuple(v) for k, v in sorted(raw.items())}, kind)


def write_fuel_mix(table: FuelMixTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["country", "year", "fuel", table.kind])
    for (country, year), mix in sorted(table.entries.items()):
        for fuel, amount in mix:
            writer.writerow([country, year, fuel, repr(amount)])


# --------------------------------------------------------------------------- intensities


@dataclass(frozen=True)
class WaterIntensityTable:
    """Water consumption per unit of electricity, by fuel (L/kWh)."""

    entries: Mapping[str, float]

    def resolve(self, fuel: str, country: Optional[str] = None) -> float:
        try:
            return self.entries[fuel]
        except KeyError:
            where = f" (referenced by {country})" if country else ""
            raise MissingDataError(f"no water intensity for fuel {fuel!r}{where}") from None

    def contributions(self, mix: Iterable[tuple[str, float]], country: Optional[str] = None) -> list[FuelContribution]:
        return [FuelContribution(fuel, amount, self.resolve(fuel, country)) for fuel, amount in mix]

    def check_covers(self, table: FuelMixTable) -> None:
        """Raise if any fuel used by ``table`` has no intensity; names every gap."""
        gaps = sorted(
            {(country, fuel) for (country, _), mix in table.entries.items() for fuel, _ in mix if fuel not in self.entries}
        )
        if gaps:
            listed = ", ".join(f"{fuel!r} for {country}" for country, fuel in gaps)
            raise MissingDataError(f"no water intensity for fuel {listed}")


def parse_water_intensity(source: Source) -> WaterIntensityTable:
    name, header, rows, stream, owned = _read_rows(source)
    try:
        missing = [c for c in ("fuel", "l_per_kwh") if c not in header]
        if missing:
            raise IngestError([Issue(name, 1, f"missing required column(s): {', '.join(missing)}")])
        i_fuel, i_val = header.index("fuel"), header.index("l_per_kwh")
        issues: list[Issue] = []
        entries: dict[str, float] = {}
        seen: dict[str, int] = {}
        for line, row in rows:
            try:
                fuel = row[i_fuel].strip()
                if not fuel:
                    raise ValueError("fuel is empty")
                value = _finite(row[i_val] if i_val < len(row) else "", "l_per_kwh")
                if value < 0:
                    raise ValueError(f"intensity for {fuel} must be >= 0, got {value:g}")
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue
            if fuel in seen:
                issues.append(Issue(name, line, f"duplicate fuel {fuel} (also on line {seen[fuel]})"))
                continue
            seen[fuel] = line
            entries[fuel] = value
    finally:
        if owned:
            stream.close()
    if issues:
        raise IngestError(issues)
    return WaterIntensityTable(dict(sorted(entries.items())))


def write_water_intensity(table: WaterIntensityTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["fuel", "l_per_kwh"])
    for fuel, value in sorted(table.entries.items()):
        writer.writerow([fuel, repr(value)])


# --------------------------------------------------------------------------- PUE


@dataclass(frozen=True)
class PueTable:
    """Power usage effectiveness by country code, plus ``US`` and ``GLOBAL``."""

    entries: Mapping[str, float]

    def __post_init__(self):
        for key, rho in self.entries.items():
            if not (math.isfinite(rho) and rho >= 1.0):
                raise ValidationError(f"PUE for {key} must be >= 1.0, got {rho}")

    def __getitem__(self, key: str) -> float:
        try:
            return self.entries[key.upper()]
        except KeyError:
            raise MissingDataError(f"no PUE for {key}") from None

    def __contains__(self, key: str) -> bool:
        return key.upper() in self.entries

    def with_overrides(self, other: "PueTable") -> "PueTable":
        return PueTable({**self.entries, **other.entries})


# Country PUEs (lowest value where several were reported), plus the U.S.
# hyperscale and global colocation averages.
_BUILTIN_PUE = {
    "DZ": 2.3,
    "EG": 2.3,
    "ET": 1.5,
    "GA": 1.9,
    "LY": 2.3,
    "MA": 2.3,
    "NA": 2.1,
    "CG": 2.0,
    "ZA": 1.4,
    "TN": 2.3,
    "RW": 1.7,
    "US": 1.17,
    "GLOBAL": 1.42,
}


def builtin_pue_table() -> PueTable:
    return PueTable(dict(_BUILTIN_PUE))


def parse_pue(source: Source) -> PueTable:
    name, header, rows, stream, owned = _read_rows(source)
    try:
        missing = [c for c in ("region", "pue") if c not in header]
        if missing:
            raise IngestError([Issue(name, 1, f"missing required column(s): {', '.join(missing)}")])
        i_key, i_val = header.index("region"), header.index("pue")
        issues: list[Issue] = []
        entries: dict[str, float] = {}
        seen: dict[str, int] = {}
        for line, row in rows:
            try:
                key = _region_key(row[i_key])
                rho = _finite(row[i_val] if i_val < len(row) else "", "pue")
                if rho < 1.0:
                    raise ValueError(f"PUE for {key} must be >= 1.0, got {rho:g}")
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue
            if key in seen:
                issues.append(Issue(name, line, f"duplicate region {key} (also on line {seen[key]})"))
                continue
            seen[key] = line
            entries[key] = rho
    finally:
        if owned:
            stream.close()
    if issues:
        raise IngestError(issues)
    return PueTable(entries)


def write_pue(table: PueTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["region", "pue"])
    for key, rho in sorted(table.entries.items()):
        writer.writerow([key, repr(rho)])


# --------------------------------------------------------------------------- region map

# Climate regions of the eleven representative countries.
_BUILTIN_REGIONS = {
    "CG": "rainforest",
    "GA": "rainforest",
    "RW": "rainforest",
    "MA": "savanna",
    "TN": "savanna",
    "EG": "desert",
    "LY": "desert",
    "NA": "steppe",
    "ET": "steppe",
    "DZ": "mediterranean",
    "ZA": "mediterranean",
}


def builtin_region_map() -> dict[str, str]:
    return dict(_BUILTIN_REGIONS)


def parse_region_map(source: Source) -> dict[str, str]:
    name, header, rows, stream, owned = _read_rows(source)
    try:
        missing = [c for c in ("country", "region") if c not in header]
        if missing:
            raise IngestError([Issue(name, 1, f"missing required column(s): {', '.join(missing)}")])
        i_c, i_r = header.index("country"), header.index("region")
        issues: list[Issue] = []
        regions: dict[str, str] = {}
        for line, row in rows:
            try:
                country = _country(row[i_c])
                region = row[i_r].strip() if i_r < len(row) else ""
                if not region:
                    raise ValueError("region is empty")
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue
            if country in regions:
                issues.append(Issue(name, line, f"duplicate country {country}"))
                continue
            regions[country] = region
    finally:
        if owned:
            stream.close()
    if issues:
        raise IngestError(issues)
    return regions


# --------------------------------------------------------------------------- keyed values


def parse_keyed_values(source: Source, columns: tuple[str, ...], allow_baselines: bool = True) -> dict[str, dict[str, float]]:
    """Parse ``key,<col>,<col>...`` tables of non-negative numbers.

    Used for carbon intensities (``key,kg_per_kwh``) and supplied WUE tables
    (``key,gamma_on,gamma_off``). Empty cells are left out of the row dict.
    """
    name, header, rows, stream, owned = _read_rows(source)
    try:
        missing = [c for c in ("key",) + columns if c not in header]
        if missing:
            raise IngestError([Issue(name, 1, f"missing required column(s): {', '.join(missing)}")])
        col = {c: header.index(c) for c in ("key",) + columns}
        issues: list[Issue] = []
        out: dict[str, dict[str, float]] = {}
        for line, row in rows:
            row = row + [""] * (len(header) - len(row))
            try:
                key = _region_key(row[col["key"]]) if allow_baselines else _country(row[col["key"]])
                values = {}
                for c in columns:
                    if row[col[c]].strip():
                        v = _finite(row[col[c]], c)
                        if v < 0:
                            raise ValueError(f"{c} for {key} must be >= 0, got {v:g}")
                        values[c] = v
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue
            if key in out:
                issues.append(Issue(name, line, f"duplicate key {key}"))
                continue
            out[key] = values
    finally:
        if owned:
            stream.close()
    if issues:
        raise IngestError(issues)
    return out


def to_text(writer, table) -> str:
    """Run one of the ``write_*`` functions into a string."""
    buf = io.StringIO()
    writer(table, buf)
    return buf.getvalue()
