import io
import random
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from aquameter.errors import ConfigError, DataWarning, MissingDataError, ValidationError
from aquameter.ingest import HourlyWeatherRecord, parse_fuel_mix, parse_water_intensity, parse_weather
from aquameter.pipeline import (
    MonthlyAggregate,
    WueSeries,
    build_dataset,
    build_offsite_series,
    build_onsite_series,
    country_offsite,
    monthly_means,
    regional_comparison,
)
from aquameter.wue import Formula

from conftest import START, weather_csv
from oracles import brute_monthly_means, weighted_mean_naive

COLD_77 = 1.5817648  # exact-rational oracle, see test_wue.py
COLD_MIN = 1.1731735133020345
APPROACH_MAX = 1.7072570938818565


def records(country, temps_f, start=START, step=1):
    return [HourlyWeatherRecord(start + timedelta(hours=i * step), country, t) for i, t in enumerate(temps_f)]


def series_from(values, start, country="ZA", step_hours=1):
    times = np.array([np.datetime64(start.replace(tzinfo=None), "s") + np.timedelta64(i * step_hours, "h") for i in range(len(values))])
    return WueSeries(country, Formula.COLD_WATER, times, values)


def test_constant_series():
    out = build_onsite_series(records("EG", [77.0] * 24))
    s = out["EG"]
    assert len(s) == 24
    assert s.values == pytest.approx([COLD_77] * 24, abs=1e-12)
    assert s.formula is Formula.COLD_WATER


def test_empty_records():
    assert build_onsite_series([]) == {}


def test_partitioned_by_country():
    recs = records("EG", [70.0, 71.0]) + records("ZA", [50.0, 51.0, 52.0])
    random.Random(1).shuffle(recs)
    out = build_onsite_series(recs, "approach")
    assert sorted(out) == ["EG", "ZA"]
    assert len(out["EG"]) == 2 and len(out["ZA"]) == 3
    assert all(s.formula is Formula.APPROACH for s in out.values())
    assert (np.diff(out["ZA"].times.astype(np.int64)) == 3600).all()


def test_series_invariants():
    t = np.array(["2024-01-01T00:00:00", "2024-01-01T00:00:00"], dtype="datetime64[s]")
    with pytest.raises(ValidationError):
        WueSeries("ZA", "coldwater", t, [1.0, 1.0])
    with pytest.raises(ValidationError):
        WueSeries("ZA", "coldwater", t[:1], [-1.0])


def test_analytic_bounds_end_to_end():
    rng = np.random.default_rng(5)
    temps = rng.uniform(-80, 150, 5000)
    cold = build_onsite_series(records("EG", temps.tolist()))["EG"]
    appr = build_onsite_series(records("EG", temps.tolist()), "approach")["EG"]
    assert cold.values.min() >= COLD_MIN - 1e-9
    assert appr.values.max() <= APPROACH_MAX + 1e-9
    assert appr.values.min() == 0.0


# ---------------------------------------------------------------- monthly


def test_full_month_constant():
    start = datetime(2024, 2, 1, tzinfo=timezone.utc)
    aggs = monthly_means(series_from([1.25] * (29 * 24), start))
    assert aggs == [MonthlyAggregate("ZA", "2024-02", 1.25, 1.0, 696, 696)]


def test_half_coverage_suppressed():
    start = datetime(2023, 9, 1, tzinfo=timezone.utc)
    s = series_from([1.5] * 360, start, step_hours=2)
    (agg,) = monthly_means(s)
    assert agg.coverage == 0.5 and agg.hours_in_month == 720
    assert agg.mean_onsite is None and not agg.reported
    (agg,) = monthly_means(s, threshold=0.5)
    assert agg.mean_onsite == 1.5


def test_empty_month_in_span_listed():
    times = np.array(["2023-08-31T23:00:00", "2023-10-01T00:00:00"], dtype="datetime64[s]")
    aggs = monthly_means(WueSeries("ZA", "coldwater", times, [1.0, 2.0]), threshold=1.0)
    assert [g.month for g in aggs] == ["2023-08", "2023-09", "2023-10"]
    assert aggs[1].coverage == 0.0 and aggs[1].mean_onsite is None


@pytest.mark.parametrize("bad", [0, -0.1, 1.01, "x"])
def test_threshold_validated(bad):
    with pytest.raises(ConfigError):
        monthly_means(series_from([1.0], START), bad)


def test_monthly_matches_brute_force():
    recs = parse_weather(io.StringIO(weather_csv(["EG"], 24 * 75, seed=11)))
    s = build_onsite_series(recs)["EG"]
    expected = brute_monthly_means((r.timestamp, v) for r, v in zip(recs, s.values.tolist()))
    for agg in monthly_means(s, threshold=1e-9):
        mean, n = expected[agg.month]
        assert agg.hours_present == n
        assert agg.mean_onsite == pytest.approx(mean, rel=1e-12)


def test_monthly_permutation_invariant():
    rng = np.random.default_rng(2)
    vals = rng.uniform(1, 2, 31 * 24)
    s = series_from(vals.tolist(), datetime(2024, 1, 1, tzinfo=timezone.utc))
    perm = rng.permutation(len(vals))
    # same timestamps, values reassigned by a within-month permutation
    shuffled = WueSeries("ZA", "coldwater", s.times, vals[perm])
    assert monthly_means(s)[0].mean_onsite == pytest.approx(monthly_means(shuffled)[0].mean_onsite, rel=1e-14)


def test_monthly_linearity():
    rng = np.random.default_rng(9)
    s = series_from(rng.uniform(1, 2, 24 * 70).tolist(), START)
    for lam in rng.uniform(0.01, 50, 20):
        for a, b in zip(monthly_means(s), monthly_means(s.scaled(lam))):
            assert b.coverage == a.coverage
            if a.reported:
                assert b.mean_onsite == pytest.approx(lam * a.mean_onsite, rel=1e-12)


def test_means_and_hour_weighting():
    s = series_from([1.0] * 12 + [3.0] * 12, datetime(2024, 1, 1, tzinfo=timezone.utc))
    assert s.mean() == 2.0
    night = [1.0] * 12 + [0.0] * 12
    assert s.hour_weighted_mean(night) == 1.0
    assert s.hour_weighted_mean([1.0] * 24) == 2.0
    with pytest.raises(ValidationError):
        s.hour_weighted_mean([1.0] * 23)


# ---------------------------------------------------------------- offsite


@pytest.fixture
def tables(fuel_mix_text, intensity_text, stream):
    return parse_fuel_mix(stream(fuel_mix_text)), parse_water_intensity(stream(intensity_text))


def test_country_offsite_hydro(tables):
    mix, intens = tables
    off = country_offsite(mix, intens, "CG", 2023)
    assert off.gamma_off == 17.0
    assert [(f.fuel, f.share, f.intensity) for f in off.fuel_breakdown] == [("hydro", 1.0, 17.0)]


def test_country_offsite_equal_split(stream):
    mix = parse_fuel_mix(stream("country,year,fuel,share\nET,2023,hydro,0.5\nET,2023,solar,0.5\n"))
    intens = parse_water_intensity(stream("fuel,l_per_kwh\nhydro,17\nsolar,1\n"))
    assert country_offsite(mix, intens, "ET", 2023).gamma_off == 9.0


def test_country_offsite_random_against_oracle(stream):
    rng = random.Random(4)
    fuels = [f"fuel{i}" for i in range(12)]
    for _ in range(50):
        chosen = rng.sample(fuels, rng.randint(1, 12))
        gen = [rng.uniform(0.1, 500) for _ in chosen]
        w = {f: rng.uniform(0, 20) for f in fuels}
        mix_text = "country,year,fuel,generation\n" + "".join(f"ZA,2023,{f},{g!r}\n" for f, g in zip(chosen, gen))
        int_text = "fuel,l_per_kwh\n" + "".join(f"{f},{v!r}\n" for f, v in w.items())
        off = country_offsite(parse_fuel_mix(stream(mix_text)), parse_water_intensity(stream(int_text)), "ZA", 2023)
        assert off.gamma_off == pytest.approx(weighted_mean_naive(gen, [w[f] for f in chosen]), rel=1e-12)
        assert off.recompute() == pytest.approx(off.gamma_off, rel=1e-12)


def test_country_offsite_errors(tables, stream):
    mix, intens = tables
    with pytest.raises(MissingDataError, match="NA"):
        country_offsite(mix, intens, "NA", 2023)
    short = parse_water_intensity(stream("fuel,l_per_kwh\ncoal,1\n"))
    with pytest.raises(MissingDataError, match="ZA"):
        country_offsite(mix, short, "ZA", 2023)


def test_offsite_broadcast_uses_year(tables):
    mix, intens = tables
    times = np.arange("2023-12-31T22", "2024-01-01T02", dtype="datetime64[h]").astype("datetime64[s]")
    series, used = build_offsite_series(times, "ZA", mix, intens)
    assert series.years.tolist() == [2023, 2023, 2024, 2024]
    assert sorted(used) == [2023, 2024]
    assert series.values[0] == used[2023].gamma_off and series.values[-1] == used[2024].gamma_off
    cg, used = build_offsite_series(times, "CG", mix, intens)
    assert cg.years.tolist() == [2023] * 4 and cg.mean() == 17.0


# ---------------------------------------------------------------- regions


def _aggs(country, means):
    return [MonthlyAggregate(country, m, v, 1.0, 720, 720) for m, v in means.items()]


def test_regional_gap_forty_percent():
    aggs = {"CG": _aggs("CG", {"2024-01": 1.0}), "EG": _aggs("EG", {"2024-01": 1.4})}
    comp = regional_comparison(aggs, {"CG": "rainforest", "EG": "desert"})
    g = comp.max_gap
    assert g.gap == pytest.approx(0.4, rel=1e-12)
    assert (g.high_region, g.low_region, g.month) == ("desert", "rainforest", "2024-01")


def test_regional_identical_regions():
    aggs = {"CG": _aggs("CG", {"2024-01": 1.3}), "EG": _aggs("EG", {"2024-01": 1.3})}
    assert regional_comparison(aggs, {"CG": "rainforest", "EG": "desert"}).max_gap.gap == 0.0


def test_regional_single_region_warns():
    aggs = {"CG": _aggs("CG", {"2024-01": 1.3}), "GA": _aggs("GA", {"2024-01": 1.1})}
    with pytest.warns(DataWarning, match="fewer than two"):
        comp = regional_comparison(aggs, {"CG": "rainforest", "GA": "rainforest"})
    assert comp.region_means == () and comp.max_gap is None


def test_regional_excludes_empty_region():
    aggs = {
        "CG": _aggs("CG", {"2024-01": 1.0}),
        "EG": _aggs("EG", {"2024-01": 1.2}),
        "NA": [MonthlyAggregate("NA", "2024-01", None, 0.1, 72, 744)],
    }
    with pytest.warns(DataWarning, match="steppe"):
        comp = regional_comparison(aggs, {"CG": "rainforest", "EG": "desert", "NA": "steppe"})
    assert comp.excluded == ("steppe",)
    assert {r.region for r in comp.region_means} == {"rainforest", "desert"}


def test_regional_means_average_countries():
    aggs = {
        "CG": _aggs("CG", {"2024-01": 1.0, "2024-02": 1.0}),
        "GA": _aggs("GA", {"2024-01": 2.0}),
        "EG": _aggs("EG", {"2024-01": 3.0, "2024-02": 1.5}),
    }
    comp = regional_comparison(aggs, {"CG": "rainforest", "GA": "rainforest", "EG": "desert"})
    by = {(r.month, r.region): (r.mean_onsite, r.n_countries) for r in comp.region_means}
    assert by[("2024-01", "rainforest")] == (1.5, 2)
    assert by[("2024-02", "rainforest")] == (1.0, 1)
    assert comp.max_gap.month == "2024-01" and comp.max_gap.gap == 1.0


# ---------------------------------------------------------------- dataset


def test_build_dataset(tables, stream):
    mix, intens = tables
    recs = parse_weather(stream(weather_csv(["ZA", "EG"], 48)))
    ds = build_dataset(recs, mix, intens, region_map={"ZA": "mediterranean", "EG": "desert"})
    assert sorted(ds.countries) == ["EG", "ZA"]
    for code, data in ds.countries.items():
        assert len(data.series) == 48 and len(data.offsite) == 48 and data.gap_hours == 0
        for off in data.offsite_years.values():
            assert off.recompute() == pytest.approx(off.gamma_off, rel=1e-12)
    # 48 hours of August: every month below coverage, so comparison is empty with warnings
    assert ds.comparison.region_means == ()
    assert any("fewer than two" in w for w in ds.warnings)


def test_build_dataset_missing_mix_country(tables, stream):
    mix, intens = tables
    recs = parse_weather(stream(weather_csv(["NA"], 4)))
    with pytest.raises(MissingDataError, match="NA"):
        build_dataset(recs, mix, intens)
