import io
import random

import pytest

from aquameter.errors import IngestError, MissingDataError, ValidationError
from aquameter.footprint import (
    BASELINE_ONSITE_WUE,
    EnergyEstimate,
    EnergyRegistry,
    FootprintResult,
    FootprintTables,
    builtin_energy_registry,
    carbon_scope2,
    compare,
    count_below,
    estimate,
    normalize_energy,
    offsite_water,
    onsite_water,
    parse_energy_registry,
    write_energy_registry,
)
from aquameter.ingest import PueTable, builtin_pue_table


def test_registry_entries():
    reg = builtin_energy_registry()
    assert len(reg) == 4
    assert reg.lookup("GPT-4", "report-10p").energy_wh == 4660.0
    assert reg.lookup("llama-3-70b", "REPORT-10P").energy_wh == 52.25
    assert reg.lookup("Llama-3-70B", "email").energy_wh == 10.0
    assert reg.lookup("gpt-4", "email").energy_wh == 232.0
    assert all(e.embedded_pue == 1.0 for e in reg)
    assert {e.output_tokens for e in reg if e.task == "report-10p"} == {5000}
    assert {e.output_tokens for e in reg if e.task == "email"} == {250}
    assert {e.model for e in reg if e.uncertainty == "high"} == {"GPT-4"}


def test_registry_unknown_lookups():
    reg = builtin_energy_registry()
    with pytest.raises(MissingDataError, match="available tasks: email, report-10p"):
        reg.lookup("gpt-4", "poem")
    with pytest.raises(MissingDataError, match="available models"):
        reg.lookup("claude", "email")


def test_registry_override_file():
    text = "model,task,output_tokens,energy_wh,embedded_pue\nLlama-3-70B,report-10p,5000,62.7,1.2\nMistral-7B,email,250,1.5,\n"
    reg = builtin_energy_registry().merged(parse_energy_registry(io.StringIO(text)))
    assert len(reg) == 5
    e = reg.lookup("llama-3-70b", "report-10p")
    assert normalize_energy(e) == pytest.approx(0.05225, rel=1e-12)
    assert reg.lookup("mistral-7b", "email").embedded_pue == 1.0


@pytest.mark.parametrize(
    "row, reason",
    [
        ("A,t,10,0,1.0", "energy_wh"),
        ("A,t,10,5,0.9", "embedded_pue"),
        ("A,t,ten,5,1.0", "invalid literal"),
        (",t,10,5,1.0", "required"),
    ],
)
def test_registry_file_errors(row, reason):
    with pytest.raises(IngestError, match=reason):
        parse_energy_registry(io.StringIO("model,task,output_tokens,energy_wh,embedded_pue\n" + row + "\n"))


def test_registry_roundtrip():
    reg = builtin_energy_registry()
    buf = io.StringIO()
    write_energy_registry(reg, buf)
    assert list(EnergyRegistry(parse_energy_registry(io.StringIO(buf.getvalue())))) == list(reg)


def test_normalize_energy():
    assert normalize_energy(EnergyEstimate("m", "t", 250, 3.144, 1.2)) * 1000 == pytest.approx(2.62, abs=1e-9)
    assert normalize_energy(EnergyEstimate("m", "t", 5000, 52.25)) == pytest.approx(0.05225, rel=1e-15)
    with pytest.raises(ValidationError):
        EnergyEstimate("m", "t", 250, 10.0, 0.9)


def test_onsite_water():
    assert onsite_water(4.66, 0.55) == pytest.approx(2.563, abs=1e-12)
    assert onsite_water(0.232, 1.07) == pytest.approx(0.24824, abs=1e-12)
    assert onsite_water(1.0, 0.0) == 0.0
    with pytest.raises(ValidationError):
        onsite_water(-1.0, 1.0)
    with pytest.raises(ValidationError):
        onsite_water(1.0, -0.1)


def test_offsite_water():
    assert offsite_water(0.05225, 1.4, 5.0) == pytest.approx(0.36575, abs=1e-12)
    assert offsite_water(0.05225, 1.4, 0.0) == 0.0
    assert offsite_water(2 * 0.3, 1.5, 3.0) == pytest.approx(2 * offsite_water(0.3, 1.5, 3.0), rel=1e-15)
    with pytest.raises(ValidationError):
        offsite_water(1.0, 0.99, 1.0)


def test_carbon_scope2():
    assert carbon_scope2(1.0, 1.0, 0.0) == 0.0
    assert carbon_scope2(1.0, 1.0, 0.5) == 0.5
    assert carbon_scope2(0.7, 2.4, 0.5) == pytest.approx(2 * carbon_scope2(0.7, 1.2, 0.5), rel=1e-15)
    with pytest.raises(ValidationError):
        carbon_scope2(1.0, 1.0, -0.1)


def test_result_total_is_exact_sum():
    r = FootprintResult("ZA", "m", "t", 0.1, 0.2)
    assert r.total_l == 0.1 + 0.2


def tables(**offsite):
    return FootprintTables(
        onsite={"ZA": 1.6, "EG": 1.9, "CG": 1.8},
        offsite={"ZA": 2.0, "EG": 0.6, "CG": 17.0, **offsite},
        carbon={"ZA": 0.9},
    )


def test_estimate_us_baseline():
    r = estimate("US", "GPT-4", "report-10p", tables(US=3.0))
    assert r.onsite_l == pytest.approx(2.563, abs=1e-9)
    assert r.offsite_l == pytest.approx(4.66 * 1.17 * 3.0, rel=1e-12)
    assert r.total_l == r.onsite_l + r.offsite_l
    assert r.uncertainty == "high" and r.carbon_kg is None


def test_estimate_country():
    r = estimate("za", "llama-3-70b", "report-10p", tables())
    assert r.key == "ZA" and r.model == "Llama-3-70B"
    assert r.onsite_l == pytest.approx(0.05225 * 1.6, rel=1e-12)
    assert r.offsite_l == pytest.approx(0.05225 * 1.4 * 2.0, rel=1e-12)
    assert r.carbon_kg == pytest.approx(0.05225 * 1.4 * 0.9, rel=1e-12)


@pytest.mark.parametrize("key, match", [("GLOBAL", "offsite WUE for GLOBAL"), ("NA", "onsite WUE for NA"), ("KE", "PUE for KE")])
def test_estimate_missing(key, match):
    t = tables()
    t.onsite = {**t.onsite, "KE": 1.0}
    with pytest.raises(MissingDataError, match=match):
        estimate(key, "gpt-4", "email", t)


def test_baseline_onsite_constants():
    assert BASELINE_ONSITE_WUE == {"US": 0.55, "GLOBAL": 1.07}
    r = estimate("GLOBAL", "gpt-4", "email", tables(GLOBAL=0.0))
    assert r.onsite_l == pytest.approx(0.24824, abs=1e-12)


def test_compare_sorted_and_flagged():
    rows = compare(["ZA", "EG", "CG"], "llama-3-70b", "report-10p", tables(US=1.0, GLOBAL=3.0))
    assert [r.rank for r in rows] == [1, 2, 3, 4, 5]
    totals = [r.result.total_l for r in rows]
    assert totals == sorted(totals)
    by = {r.result.key: r for r in rows}
    assert by["CG"].vs_global == "above" and by["EG"].vs_global == "below"
    assert by["US"].vs_us == "equal"
    assert count_below(rows, "GLOBAL") == sum(1 for k in ("ZA", "EG", "CG") if by[k].vs_global == "below")


def test_compare_tie_break_by_key():
    t = FootprintTables(onsite={"ZA": 1.0, "EG": 1.0, "MA": 1.0}, offsite={"ZA": 1.0, "EG": 1.0, "MA": 1.0},
                        pue=builtin_pue_table().with_overrides(PueTable({"ZA": 2.3})))
    rows = compare(["ZA", "MA", "EG"], "gpt-4", "email", t, baselines=())
    assert [r.result.key for r in rows] == ["EG", "MA", "ZA"]
    assert all(r.vs_us is None and r.vs_global is None for r in rows)


def test_compare_single():
    rows = compare(["ZA"], "gpt-4", "email", tables(), baselines=[])
    assert len(rows) == 1 and rows[0].rank == 1


def test_compare_fails_whole_table():
    with pytest.raises(MissingDataError, match="GLOBAL"):
        compare(["ZA", "EG"], "gpt-4", "email", tables(US=1.0))


# ---------------------------------------------------------------- properties


def test_linearity_in_energy():
    rng = random.Random(7)
    for _ in range(200):
        e, lam = rng.uniform(0.001, 10), rng.uniform(0.01, 100)
        g_on, g_off, rho = rng.uniform(0, 3), rng.uniform(0, 20), rng.uniform(1, 3)
        base = onsite_water(e, g_on) + offsite_water(e, rho, g_off)
        scaled = onsite_water(lam * e, g_on) + offsite_water(lam * e, rho, g_off)
        assert scaled == pytest.approx(lam * base, rel=1e-12)


def test_decomposition_ratio():
    rng = random.Random(8)
    for _ in range(200):
        e, g_on, g_off, rho = rng.uniform(0.001, 10), rng.uniform(0.01, 3), rng.uniform(0, 20), rng.uniform(1, 3)
        assert offsite_water(e, rho, g_off) / onsite_water(e, g_on) == pytest.approx(rho * g_off / g_on, rel=1e-12)


def test_pue_monotonicity():
    t = tables()
    base = estimate("ZA", "gpt-4", "email", t)
    t.pue = t.pue.with_overrides(PueTable({"ZA": 1.5}))
    higher = estimate("ZA", "gpt-4", "email", t)
    assert higher.total_l > base.total_l and higher.onsite_l == base.onsite_l


def test_ranking_invariance_under_uniform_scaling():
    rng = random.Random(10)
    keys = ["DZ", "EG", "ET", "GA", "LY", "MA", "NA", "CG", "ZA", "TN", "RW"]
    for _ in range(50):
        on = {k: rng.uniform(1.1, 2.0) for k in keys}
        off = {k: rng.uniform(0.1, 20) for k in keys}
        off.update(US=rng.uniform(0, 5), GLOBAL=rng.uniform(0, 5))
        lam = rng.uniform(0.01, 100)
        a = compare(keys, "llama-3-70b", "report-10p", FootprintTables(on, off))
        b = compare(
            keys, "llama-3-70b", "report-10p",
            FootprintTables({k: lam * v for k, v in {**on, **BASELINE_ONSITE_WUE}.items()}, {k: lam * v for k, v in off.items()}),
        )
        assert [r.result.key for r in a] == [r.result.key for r in b]
