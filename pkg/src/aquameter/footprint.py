"""Per-task water footprint of LLM inference.

Onsite water is server energy times onsite WUE. Offsite water additionally
scales by PUE, since the electricity drawn for facility overhead is also
generated somewhere::

    onsite  = gamma_on * E
    offsite = gamma_off * pue * E
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional, Sequence

from .errors import IngestError, Issue, MissingDataError, ValidationError
from .ingest import PueTable, Source, _read_rows, builtin_pue_table

# Average onsite WUE, L/kWh: U.S. hyperscale and global colocation references.
BASELINE_ONSITE_WUE = {"US": 0.55, "GLOBAL": 1.07}
BASELINES = ("US", "GLOBAL")


def _nonneg(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(f"{what} must be a finite non-negative number, got {value}")
    return value


@dataclass(frozen=True)
class EnergyEstimate:
    """Server energy for one (model, task).

    ``energy_wh`` may already include a facility PUE (``embedded_pue``); it is
    divided out by :func:`normalize_energy`. Output tokens are informational.
    """

    model: str
    task: str
    output_tokens: int
    energy_wh: float
    embedded_pue: float = 1.0
    uncertainty: Optional[str] = None

    def __post_init__(self):
        if not (math.isfinite(self.energy_wh) and self.energy_wh > 0):
            raise ValidationError(f"{self.model}/{self.task}: energy_wh must be > 0, got {self.energy_wh}")
        if not (math.isfinite(self.embedded_pue) and self.embedded_pue >= 1.0):
            raise ValidationError(f"{self.model}/{self.task}: embedded_pue must be >= 1.0, got {self.embedded_pue}")
        if self.output_tokens < 0:
            raise ValidationError(f"{self.model}/{self.task}: output_tokens must be >= 0")

    @property
    def key(self) -> tuple[str, str]:
        return (self.model.lower(), self.task.lower())


def normalize_energy(e: EnergyEstimate) -> float:
    """Server energy in kWh with any embedded PUE removed."""
    if not e.embedded_pue >= 1.0:
        raise ValidationError(f"embedded_pue must be >= 1.0, got {e.embedded_pue}")
    return (e.energy_wh / e.embedded_pue) / 1000.0


class EnergyRegistry:
    """Lookup of energy estimates by case-insensitive (model, task)."""

    def __init__(self, entries: Iterable[EnergyEstimate] = ()):
        self._entries: dict[tuple[str, str], EnergyEstimate] = {}
        for e in entries:
            self._entries[e.key] = e

    def __iter__(self):
        return iter(sorted(self._entries.values(), key=lambda e: e.key))

    def __len__(self) -> int:
        return len(self._entries)

    def models(self) -> list[str]:
        return sorted({e.model for e in self._entries.values()})

    def tasks(self, model: Optional[str] = None) -> list[str]:
        return sorted({
            e.task for e in self._entries.values() if model is None or e.model.lower() == model.lower()
        })

    def lookup(self, model: str, task: str) -> EnergyEstimate:
        try:
            return self._entries[(model.lower(), task.lower())]
        except KeyError:
            pass
        if model.lower() not in {m.lower() for m in self.models()}:
            raise MissingDataError(f"unknown model {model!r}; available models: {', '.join(self.models())}")
        raise MissingDataError(f"unknown task {task!r} for {model}; available tasks: {', '.join(self.tasks(model))}")

    def merged(self, other: Iterable[EnergyEstimate]) -> "EnergyRegistry":
        """A new registry where entries from ``other`` add to or replace these."""
        return EnergyRegistry([*self, *other])


def builtin_energy_registry() -> EnergyRegistry:
    # The report figures are the calculator values with its 1.2 PUE already removed.
    return EnergyRegistry([
        EnergyEstimate("Llama-3-70B", "report-10p", 5000, 52.25, 1.0),
        EnergyEstimate("GPT-4", "report-10p", 5000, 4660.0, 1.0, uncertainty="high"),
        EnergyEstimate("Llama-3-70B", "email", 250, 10.0, 1.0),
        EnergyEstimate("GPT-4", "email", 250, 232.0, 1.0, uncertainty="high"),
    ])


ENERGY_COLUMNS = ("model", "task", "output_tokens", "energy_wh", "embedded_pue")


def parse_energy_registry(source: Source) -> list[EnergyEstimate]:
    """Read ``model,task,output_tokens,energy_wh,embedded_pue`` rows."""
    name, header, rows, stream, owned = _read_rows(source)
    try:
        missing = [c for c in ENERGY_COLUMNS if c not in header]
        if missing:
            raise IngestError([Issue(name, 1, f"missing required column(s): {', '.join(missing)}")])
        col = {c: header.index(c) for c in ENERGY_COLUMNS}
        i_unc = header.index("uncertainty") if "uncertainty" in header else None
        issues, out, seen = [], [], {}
        for line, row in rows:
            row = row + [""] * (len(header) - len(row))
            try:
                model, task = row[col["model"]].strip(), row[col["task"]].strip()
                if not model or not task:
                    raise ValueError("model and task are required")
                tokens = int(row[col["output_tokens"]].strip() or 0)
                energy = float(row[col["energy_wh"]])
                pue = float(row[col["embedded_pue"]].strip() or 1.0)
                unc = (row[i_unc].strip() or None) if i_unc is not None else None
                e = EnergyEstimate(model, task, tokens, energy, pue, unc)
            except ValueError as exc:
                issues.append(Issue(name, line, str(exc)))
                continue
            if e.key in seen:
                issues.append(Issue(name, line, f"duplicate entry {model}/{task} (also on line {seen[e.key]})"))
                continue
            seen[e.key] = line
            out.append(e)
    finally:
        if owned:
            stream.close()
    if issues:
        raise IngestError(issues)
    return out


def write_energy_registry(entries: Iterable[EnergyEstimate], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([*ENERGY_COLUMNS, "uncertainty"])
    for e in entries:
        writer.writerow([e.model, e.task, e.output_tokens, repr(e.energy_wh), repr(e.embedded_pue), e.uncertainty or ""])


def onsite_water(energy_kwh: float, gamma_on: float) -> float:
    """Onsite (cooling) water in liters. PUE does not enter here."""
    energy_kwh = _nonneg(energy_kwh, "energy")
    gamma_on = _nonneg(gamma_on, "onsite WUE")
    return gamma_on * energy_kwh


def offsite_water(energy_kwh: float, rho: float, gamma_off: float) -> float:
    """Offsite (electricity generation) water in liters."""
    energy_kwh = _nonneg(energy_kwh, "energy")
    gamma_off = _nonneg(gamma_off, "offsite WUE")
    if not (math.isfinite(rho) and rho >= 1.0):
        raise ValidationError(f"PUE must be >= 1.0, got {rho}")
    return energy_kwh * rho * gamma_off


def carbon_scope2(energy_kwh: float, rho: float, carbon_intensity: float) -> float:
    """Scope-2 emissions in kgCO2e for grid carbon intensity in kg/kWh."""
    energy_kwh = _nonneg(energy_kwh, "energy")
    carbon_intensity = _nonneg(carbon_intensity, "carbon intensity")
    if not (math.isfinite(rho) and rho >= 1.0):
        raise ValidationError(f"PUE must be >= 1.0, got {rho}")
    return energy_kwh * rho * carbon_intensity


@dataclass(frozen=True)
class FootprintResult:
    key: str
    model: str
    task: str
    onsite_l: float
    offsite_l: float
    total_l: float = field(init=False)
    carbon_kg: Optional[float] = None
    uncertainty: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "total_l", self.onsite_l + self.offsite_l)


@dataclass
class FootprintTables:
    """Everything :func:`estimate` needs, keyed by country code or ``US``/``GLOBAL``.

    ``US`` and ``GLOBAL`` fall back to the published average onsite WUE when
    ``onsite`` has no entry for them. Offsite WUE has no fallback.
    """

    onsite: Mapping[str, float] = field(default_factory=dict)
    offsite: Mapping[str, float] = field(default_factory=dict)
    pue: PueTable = field(default_factory=builtin_pue_table)
    registry: EnergyRegistry = field(default_factory=builtin_energy_registry)
    carbon: Mapping[str, float] = field(default_factory=dict)

    def gamma_on(self, key: str) -> float:
        key = key.upper()
        if key in self.onsite:
            return self.onsite[key]
        if key in BASELINE_ONSITE_WUE:
            return BASELINE_ONSITE_WUE[key]
        raise MissingDataError(f"no onsite WUE for {key}")

    def gamma_off(self, key: str) -> float:
        key = key.upper()
        if key not in self.offsite:
            raise MissingDataError(f"no offsite WUE for {key}")
        return self.offsite[key]


def estimate(key: str, model: str, task: str, tables: FootprintTables) -> FootprintResult:
    key = key.upper()
    e = tables.registry.lookup(model, task)
    energy = normalize_energy(e)
    rho = tables.pue[key]
    on = onsite_water(energy, tables.gamma_on(key))
    off = offsite_water(energy, rho, tables.gamma_off(key))
    carbon = None
    if key in tables.carbon:
        carbon = carbon_scope2(energy, rho, tables.carbon[key])
    return FootprintResult(key, e.model, e.task, on, off, carbon, e.uncertainty)


@dataclass(frozen=True)
class ComparisonRow:
    rank: int
    result: FootprintResult
    vs_us: Optional[str]
    vs_global: Optional[str]


def _relation(value: float, baseline: Optional[float]) -> Optional[str]:
    if baseline is None:
        return None
    if value < baseline:
        return "below"
    if value > baseline:
        return "above"
    return "equal"


def compare(
    keys: Sequence[str],
    model: str,
    task: str,
    tables: FootprintTables,
    baselines: Sequence[str] = BASELINES,
) -> list[ComparisonRow]:
    """Footprints for ``keys`` plus baselines, ranked by total water ascending.

    Ties are broken by key. Any unresolvable key fails the whole comparison.
    """
    wanted = list(dict.fromkeys(k.upper() for k in [*keys, *baselines]))
    results = [estimate(k, model, task, tables) for k in wanted]
    totals = {r.key: r.total_l for r in results}
    us = totals.get("US") if "US" in {b.upper() for b in baselines} else None
    glob = totals.get("GLOBAL") if "GLOBAL" in {b.upper() for b in baselines} else None
    results.sort(key=lambda r: (r.total_l, r.key))
    return [
        ComparisonRow(i, r, _relation(r.total_l, us), _relation(r.total_l, glob))
        for i, r in enumerate(results, start=1)
    ]


def count_below(rows: Iterable[ComparisonRow], baseline: str = "GLOBAL") -> int:
    """Number of non-baseline rows strictly below ``baseline``'s total."""
    attr = "vs_us" if baseline.upper() == "US" else "vs_global"
    return sum(1 for row in rows if row.result.key not in BASELINES and getattr(row, attr) == "below")
