"""aquameter: data-center water usage efficiency and LLM inference water footprints."""

__version__ = "0.1.0"

from .errors import (
    AquameterError,
    ConfigError,
    DataWarning,
    DegenerateMixError,
    IngestError,
    MissingDataError,
    ValidationError,
)
from .footprint import (
    EnergyEstimate,
    FootprintResult,
    FootprintTables,
    builtin_energy_registry,
    carbon_scope2,
    compare,
    estimate,
    normalize_energy,
    offsite_water,
    onsite_water,
)
from .ingest import (
    FuelMixTable,
    HourlyWeatherRecord,
    PueTable,
    WaterIntensityTable,
    builtin_pue_table,
    parse_fuel_mix,
    parse_pue,
    parse_water_intensity,
    parse_weather,
)
from .pipeline import (
    CountryOffsite,
    MonthlyAggregate,
    WueSeries,
    build_onsite_series,
    country_offsite,
    monthly_means,
    regional_comparison,
)
from .wue import (
    Formula,
    FuelContribution,
    OffsiteWue,
    OnsiteWue,
    WetBulbTemp,
    celsius_to_fahrenheit,
    fahrenheit_to_celsius,
    offsite_wue,
    onsite_wue,
    onsite_wue_fixed_approach,
    onsite_wue_fixed_cold_water,
)
