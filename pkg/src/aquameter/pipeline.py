"""Hourly WUE series, monthly aggregates and per-country offsite WUE.

Series are stored column-wise as numpy arrays (``datetime64[s]`` timestamps in
UTC and float64 values) so that a full year for dozens of countries can be
built and aggregated in well under a second.
"""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataWarning, ValidationError
from .ingest import FuelMixTable, HourlyWeatherRecord, WaterIntensityTable
from .wue import DEFAULT_FORMULA, Formula, offsite_wue, onsite_wue_array

DEFAULT_COVERAGE_THRESHOLD = 0.9


@dataclass(eq=False)
class WueSeries:
    """Hourly onsite WUE for one country."""

    country: str
    formula: Formula
    times: np.ndarray  # datetime64[s], UTC
    values: np.ndarray  # L/kWh

    def __post_init__(self):
        self.formula = Formula.parse(self.formula)
        self.times = np.asarray(self.times, dtype="datetime64[s]")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValidationError("times and values must be 1-d arrays of equal length")
        if len(self.times) > 1 and not (np.diff(self.times.astype(np.int64)) > 0).all():
            raise ValidationError(f"{self.country}: series timestamps must be strictly increasing")
        if (self.values < 0).any() or not np.isfinite(self.values).all():
            raise ValidationError(f"{self.country}: onsite WUE values must be finite and >= 0")

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WueSeries):
            return NotImplemented
        return (
            self.country == other.country
            and self.formula is other.formula
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    @property
    def points(self) -> list[tuple[np.datetime64, float]]:
        return list(zip(self.times, self.values.tolist()))

    def scaled(self, factor: float) -> "WueSeries":
        return WueSeries(self.country, self.formula, self.times.copy(), self.values * factor)

    def mean(self) -> float:
        """Annual (whole-series) mean onsite WUE."""
        if not len(self):
            raise ValidationError(f"{self.country}: empty series has no mean")
        return math.fsum(self.values.tolist()) / len(self)

    def hour_weighted_mean(self, hour_weights: Sequence[float]) -> float:
        """Mean onsite WUE with each point weighted by the workload at its UTC hour of day.

        ``hour_weights`` holds 24 non-negative weights, index 0 for 00:00 UTC.
        """
        w = np.asarray(hour_weights, dtype=np.float64)
        if w.shape != (24,) or (w < 0).any() or not np.isfinite(w).all():
            raise ValidationError("hour_weights must be 24 finite non-negative numbers")
        hours = (self.times.astype(np.int64) // 3600) % 24
        point_w = w[hours]
        total = point_w.sum()
        if total <= 0:
            raise ValidationError(f"{self.country}: hour weights select no observed hours")
        return float(np.dot(point_w, self.values) / total)


def build_onsite_series(
    records: Iterable[HourlyWeatherRecord],
    formula: Union[str, Formula] = DEFAULT_FORMULA,
) -> dict[str, WueSeries]:
    """One onsite WUE series per country, one point per record."""
    formula = Formula.parse(formula)
    by_country: dict[str, tuple[list[int], list[float]]] = defaultdict(lambda: ([], []))
    for r in records:
        ts, temps = by_country[r.country]
        ts.append(int(r.timestamp.timestamp()))
        temps.append(r.wet_bulb_f)

    out = {}
    for country in sorted(by_country):
        ts, temps = by_country[country]
        times = np.asarray(ts, dtype=np.int64)
        order = np.argsort(times, kind="stable")
        times, temps_f = times[order], np.asarray(temps, dtype=np.float64)[order]
        out[country] = WueSeries(country, formula, times.astype("datetime64[s]"), onsite_wue_array(temps_f, formula))
    return out


# --------------------------------------------------------------------------- monthly


@dataclass(frozen=True)
class MonthlyAggregate:
    country: str
    month: str  # YYYY-MM, UTC calendar month
    mean_onsite: Optional[float]  # None when coverage is below threshold
    coverage: float
    hours_present: int
    hours_in_month: int

    @property
    def reported(self) -> bool:
        return self.mean_onsite is not None


def _check_threshold(threshold: float) -> float:
    try:
        threshold = float(threshold)
    except (TypeError, ValueError):
        raise ConfigError(f"coverage threshold must be a number, got {threshold!r}") from None
    if not (0.0 < threshold <= 1.0):
        raise ConfigError(f"coverage threshold must be in (0, 1], got {threshold}")
    return threshold


def monthly_means(series: WueSeries, threshold: float = DEFAULT_COVERAGE_THRESHOLD) -> list[MonthlyAggregate]:
    """Mean onsite WUE per UTC calendar month.

    Every month from the first to the last observation is listed, including
    empty ones. A month's mean is reported only if the fraction of its hours
    present reaches ``threshold``.
    """
    threshold = _check_threshold(threshold)
    if not len(series):
        return []
    months = series.times.astype("datetime64[M]")
    first, last = months[0], months[-1]
    all_months = np.arange(first, last + 1, dtype="datetime64[M]")
    idx = (months - first).astype(np.int64)
    counts = np.bincount(idx, minlength=len(all_months))
    sums = np.bincount(idx, weights=series.values, minlength=len(all_months))
    hours = ((all_months + 1).astype("datetime64[h]") - all_months.astype("datetime64[h]")).astype(np.int64)

    out = []
    for m, n, s, h in zip(all_months, counts.tolist(), sums.tolist(), hours.tolist()):
        coverage = n / h
        mean = s / n if n and coverage >= threshold else None
        out.append(MonthlyAggregate(series.country, str(m), mean, coverage, n, h))
    return out


# --------------------------------------------------------------------------- offsite


@dataclass(frozen=True)
class FuelShare:
    fuel: str
    share: float  # fraction of the country-year's generation
    intensity: float  # L/kWh


@dataclass(frozen=True)
class CountryOffsite:
    country: str
    year: int
    gamma_off: float
    fuel_breakdown: tuple[FuelShare, ...]

    def recompute(self) -> float:
        """Offsite WUE from the stored breakdown alone."""
        return math.fsum(f.share * f.intensity for f in self.fuel_breakdown) / math.fsum(
            f.share for f in self.fuel_breakdown
        )


def country_offsite(mix: FuelMixTable, intensities: WaterIntensityTable, country: str, year: int) -> CountryOffsite:
    """Annual offsite WUE for one country, keeping the per-fuel breakdown."""
    entries = mix[(country, year)]
    contributions = intensities.contributions(entries, country)
    gamma = offsite_wue(contributions).liters_per_kwh
    total = math.fsum(c.energy for c in contributions)
    breakdown = tuple(FuelShare(c.fuel, c.energy / total, c.intensity) for c in contributions)
    return CountryOffsite(country, int(year), gamma, breakdown)


@dataclass(eq=False)
class OffsiteSeries:
    """Annual offsite WUE broadcast onto hourly timestamps."""

    country: str
    times: np.ndarray
    years: np.ndarray  # fuel-mix year used for each hour
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def mean(self) -> float:
        if not len(self):
            raise ValidationError(f"{self.country}: empty offsite series has no mean")
        return math.fsum(self.values.tolist()) / len(self)


def build_offsite_series(
    times: np.ndarray,
    country: str,
    mix: FuelMixTable,
    intensities: WaterIntensityTable,
) -> tuple[OffsiteSeries, dict[int, CountryOffsite]]:
    """Broadcast annual offsite WUE onto ``times``.

    Each hour uses the fuel mix of its own calendar year, or the latest earlier
    year on file when that year is missing.
    """
    times = np.asarray(times, dtype="datetime64[s]")
    cal_years = times.astype("datetime64[Y]").astype(np.int64) + 1970
    used: dict[int, CountryOffsite] = {}
    years = np.empty(len(times), dtype=np.int64)
    values = np.empty(len(times), dtype=np.float64)
    for y in np.unique(cal_years).tolist():
        mix_year = mix.year_for(country, y)
        if mix_year not in used:
            used[mix_year] = country_offsite(mix, intensities, country, mix_year)
        sel = cal_years == y
        years[sel] = mix_year
        values[sel] = used[mix_year].gamma_off
    return OffsiteSeries(country, times, years, values), dict(sorted(used.items()))


# --------------------------------------------------------------------------- regions


@dataclass(frozen=True)
class RegionMonth:
    month: str
    region: str
    mean_onsite: float
    n_countries: int


@dataclass(frozen=True)
class MonthGap:
    month: str
    high_region: str
    low_region: str
    gap: float  # (max - min) / min


@dataclass(frozen=True)
class RegionalComparison:
    region_means: tuple[RegionMonth, ...] = ()
    gaps: tuple[MonthGap, ...] = ()
    excluded: tuple[str, ...] = ()

    @property
    def max_gap(self) -> Optional[MonthGap]:
        if not self.gaps:
            return None
        # gaps are month-ordered and max() keeps the first, so ties go to the earliest month
        return max(self.gaps, key=lambda g: g.gap)


def regional_comparison(
    aggregates: Mapping[str, Sequence[MonthlyAggregate]],
    region_map: Mapping[str, str],
) -> RegionalComparison:
    """Per-region monthly means and the relative spread between regions.

    A region's monthly mean is the plain average of its countries' reported
    monthly means. For each month with at least two regions reporting, the
    gap is ``(max - min) / min`` across regional means.
    """
    per_region: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    regions_seen: set[str] = set()
    for country, aggs in sorted(aggregates.items()):
        region = region_map.get(country)
        if region is None:
            warnings.warn(f"{country} has no region assignment; excluded from comparison", DataWarning, stacklevel=2)
            continue
        regions_seen.add(region)
        for a in aggs:
            if a.reported:
                per_region[region][a.month].append(a.mean_onsite)

    excluded = sorted(r for r in regions_seen if not per_region.get(r))
    for r in excluded:
        warnings.warn(f"region {r} has no reported months; excluded from comparison", DataWarning, stacklevel=2)

    active = sorted(r for r in per_region if per_region[r])
    if len(active) < 2:
        warnings.warn("fewer than two regions with reported months; comparison is empty", DataWarning, stacklevel=2)
        return RegionalComparison(excluded=tuple(excluded))

    means: list[RegionMonth] = []
    by_month: dict[str, list[tuple[float, str]]] = defaultdict(list)
    for region in active:
        for month, vals in sorted(per_region[region].items()):
            m = math.fsum(vals) / len(vals)
            means.append(RegionMonth(month, region, m, len(vals)))
            by_month[month].append((m, region))
    means.sort(key=lambda rm: (rm.month, rm.region))

    gaps = []
    for month in sorted(by_month):
        vals = by_month[month]
        if len(vals) < 2:
            continue
        lo = min(vals, key=lambda v: v[0])
        hi = max(vals, key=lambda v: v[0])
        gap = 0.0 if hi[0] == lo[0] else ((hi[0] - lo[0]) / lo[0] if lo[0] > 0 else math.inf)
        gaps.append(MonthGap(month, hi[1], lo[1], gap))
    return RegionalComparison(tuple(means), tuple(gaps), tuple(excluded))


# --------------------------------------------------------------------------- dataset


@dataclass
class CountryData:
    series: WueSeries
    offsite: Optional[OffsiteSeries]
    offsite_years: dict[int, CountryOffsite]
    monthly: list[MonthlyAggregate]
    gap_hours: int


@dataclass
class Dataset:
    formula: Formula
    coverage_threshold: float
    countries: dict[str, CountryData] = field(default_factory=dict)
    region_map: dict[str, str] = field(default_factory=dict)
    comparison: Optional[RegionalComparison] = None
    warnings: list[str] = field(default_factory=list)


def _gap_hours(series: WueSeries) -> int:
    if not len(series):
        return 0
    span = int((series.times[-1] - series.times[0]).astype(np.int64)) // 3600 + 1
    return span - len(series)


def build_dataset(
    records: Iterable[HourlyWeatherRecord],
    mix: Optional[FuelMixTable] = None,
    intensities: Optional[WaterIntensityTable] = None,
    formula: Union[str, Formula] = DEFAULT_FORMULA,
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    region_map: Optional[Mapping[str, str]] = None,
) -> Dataset:
    """Compute everything that goes into an exported dataset directory.

    Offsite series are built for every country with weather data; a country
    without a fuel mix, or a fuel without an intensity, is a hard error.
    """
    threshold = _check_threshold(coverage_threshold)
    formula = Formula.parse(formula)
    if (mix is None) != (intensities is None):
        raise ConfigError("fuel mix and water intensities must be supplied together")
    if mix is not None:
        intensities.check_covers(mix)

    ds = Dataset(formula, threshold, region_map=dict(region_map or {}))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DataWarning)
        for country, series in build_onsite_series(records, formula).items():
            offsite, years = (None, {})
            if mix is not None:
                offsite, years = build_offsite_series(series.times, country, mix, intensities)
            ds.countries[country] = CountryData(
                series, offsite, years, monthly_means(series, threshold), _gap_hours(series)
            )
        if region_map is not None:
            ds.comparison = regional_comparison(
                {c: d.monthly for c, d in ds.countries.items()}, ds.region_map
            )
    for w in caught:
        if issubclass(w.category, DataWarning):
            ds.warnings.append(str(w.message))
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return ds
