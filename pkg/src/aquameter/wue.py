"""Onsite and offsite water usage efficiency (WUE) formulas.

Onsite WUE follows two empirical cooling-tower fits in wet-bulb temperature
(degrees Fahrenheit), one for a fixed approach temperature and one for a fixed
cold water temperature. Both are clamped at zero. Offsite WUE is the
generation-weighted mean of per-fuel water intensities.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateMixError, ValidationError

# Plausibility band for wet-bulb temperature, degrees F.
T_MIN_F = -80.0
T_MAX_F = 150.0

# Fixed approach: -0.0001896 T^2 + 0.03095 T + 0.4442
APPROACH_COEFFS = (-0.0001896, 0.03095, 0.4442)
# Fixed cold water temperature: 0.0005112 T^2 - 0.04982 T + 2.387
COLD_WATER_COEFFS = (0.0005112, -0.04982, 2.387)


class Formula(str, Enum):
    """Cooling tower control configuration selecting the onsite WUE fit."""

    APPROACH = "approach"
    COLD_WATER = "coldwater"

    @classmethod
    def parse(cls, value: Union[str, "Formula"]) -> "Formula":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise ValidationError(f"unknown formula {value!r}; expected one of: {choices}") from None

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return APPROACH_COEFFS if self is Formula.APPROACH else COLD_WATER_COEFFS


DEFAULT_FORMULA = Formula.COLD_WATER


def _require_finite(value: float, what: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} is not a number: {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value}")
    return value


def celsius_to_fahrenheit(c: float) -> float:
    c = _require_finite(c, "temperature")
    return c * 9.0 / 5.0 + 32.0


def fahrenheit_to_celsius(f: float) -> float:
    f = _require_finite(f, "temperature")
    return (f - 32.0) * 5.0 / 9.0


@dataclass(frozen=True)
class WetBulbTemp:
    """A wet-bulb temperature reading in Celsius ("C") or Fahrenheit ("F")."""

    value: float
    unit: str = "F"

    def __post_init__(self):
        unit = str(self.unit).upper()
        if unit not in ("C", "F"):
            raise ValidationError(f"unit must be 'C' or 'F', got {self.unit!r}")
        object.__setattr__(self, "unit", unit)
        object.__setattr__(self, "value", _require_finite(self.value, "wet-bulb temperature"))
        check_plausible(self.fahrenheit)

    @property
    def fahrenheit(self) -> float:
        return self.value if self.unit == "F" else celsius_to_fahrenheit(self.value)

    @classmethod
    def from_celsius(cls, c: float) -> "WetBulbTemp":
        return cls(c, "C")


def check_plausible(t_f: float) -> float:
    """Return ``t_f`` if it lies within the wet-bulb plausibility band, else raise."""
    t_f = _require_finite(t_f, "wet-bulb temperature")
    if not T_MIN_F <= t_f <= T_MAX_F:
        raise ValidationError(
            f"wet-bulb temperature {t_f:g} F outside plausible range [{T_MIN_F:g}, {T_MAX_F:g}] F"
        )
    return t_f


@dataclass(frozen=True)
class OnsiteWue:
    liters_per_kwh: float
    config: Formula


TempLike = Union[WetBulbTemp, float, int]


def _as_fahrenheit(t: TempLike) -> float:
    # bare numbers are taken as Fahrenheit, the canonical internal unit
    if isinstance(t, WetBulbTemp):
        return t.fahrenheit
    return check_plausible(t)


def _clamped_quadratic(t_f: float, coeffs: tuple[float, float, float]) -> float:
    a, b, c = coeffs
    return max(0.0, a * t_f * t_f + b * t_f + c)


def onsite_wue_fixed_approach(t: TempLike) -> OnsiteWue:
    """Onsite WUE (L/kWh) for a cooling tower run at a fixed approach temperature."""
    return OnsiteWue(_clamped_quadratic(_as_fahrenheit(t), APPROACH_COEFFS), Formula.APPROACH)


def onsite_wue_fixed_cold_water(t: TempLike) -> OnsiteWue:
    """Onsite WUE (L/kWh) for a cooling tower run at a fixed cold water temperature.

    This is the default onsite model everywhere else in the package.
    """
    return OnsiteWue(_clamped_quadratic(_as_fahrenheit(t), COLD_WATER_COEFFS), Formula.COLD_WATER)


def onsite_wue(t: TempLike, formula: Union[str, Formula] = DEFAULT_FORMULA) -> OnsiteWue:
    formula = Formula.parse(formula)
    if formula is Formula.APPROACH:
        return onsite_wue_fixed_approach(t)
    return onsite_wue_fixed_cold_water(t)


def onsite_wue_array(temps_f, formula: Union[str, Formula] = DEFAULT_FORMULA) -> np.ndarray:
    """Vectorized onsite WUE over an array of Fahrenheit wet-bulb temperatures.

    Raises:
        ValidationError: if any element is non-finite or outside the plausibility band.
    """
    formula = Formula.parse(formula)
    t = np.asarray(temps_f, dtype=np.float64)
    bad = ~np.isfinite(t) | (t < T_MIN_F) | (t > T_MAX_F)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            f"{int(bad.sum())} implausible wet-bulb temperature(s); first at index {idx}: {t[idx]!r} F"
        )
    a, b, c = formula.coefficients
    return np.maximum(0.0, a * t * t + b * t + c)


@dataclass(frozen=True)
class FuelContribution:
    """One fuel's share of a generation mix and its water intensity."""

    fuel: str
    energy: float
    intensity: float

    def __post_init__(self):
        energy = _require_finite(self.energy, f"generation for {self.fuel!r}")
        intensity = _require_finite(self.intensity, f"water intensity for {self.fuel!r}")
        if energy < 0:
            raise ValidationError(f"generation for {self.fuel!r} must be >= 0, got {energy}")
        if intensity < 0:
            raise ValidationError(f"water intensity for {self.fuel!r} must be >= 0, got {intensity}")
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "intensity", intensity)


@dataclass(frozen=True)
class OffsiteWue:
    liters_per_kwh: float


def offsite_wue(mix: Iterable[FuelContribution]) -> OffsiteWue:
    """Generation-weighted mean water intensity of an electricity mix.

    The result is invariant to the scale of the generation figures, so either
    absolute generation or fractional shares may be passed.

    Raises:
        DegenerateMixError: if the mix is empty or its total generation is zero.
    """
    mix: Sequence[FuelContribution] = list(mix)
    if not mix:
        raise DegenerateMixError("fuel mix is empty")
    total = math.fsum(f.energy for f in mix)
    if total <= 0.0:
        raise DegenerateMixError("fuel mix has zero total generation")
    weighted = math.fsum(f.energy * f.intensity for f in mix)
    value = weighted / total
    # fsum keeps the quotient inside [min w, max w]; guard the last ulp anyway
    positive = [f.intensity for f in mix if f.energy > 0]
    value = min(max(value, min(positive)), max(positive))
    return OffsiteWue(value)
