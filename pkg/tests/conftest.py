import io
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

START = datetime(2023, 8, 23, tzinfo=timezone.utc)


def stamp(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def weather_csv(countries, hours, start=START, unit="c", seed=0, low=5.0, high=28.0) -> str:
    """Synthetic hourly weather CSV with a daily cycle plus noise."""
    rng = np.random.default_rng(seed)
    lines = [f"timestamp,country,wet_bulb_{unit},humidity,precip_mm"]
    stamps = [stamp(start + timedelta(hours=h)) for h in range(hours)]
    for i, c in enumerate(countries):
        base = rng.uniform(low, high)
        cycle = 3.0 * np.sin(np.arange(hours) * 2 * np.pi / 24 + i)
        temps = np.clip(base + cycle + rng.normal(0, 1.0, hours), low - 5, high + 5)
        if unit == "f":
            temps = temps * 9 / 5 + 32
        hum = rng.uniform(10, 95, hours)
        lines.extend(f"{s},{c},{t:.2f},{h:.1f},0.0" for s, t, h in zip(stamps, temps, hum))
    return "\n".join(lines) + "\n"


FUEL_MIX_CSV = """country,year,fuel,share
ZA,2023,coal,0.8
ZA,2023,solar,0.1
ZA,2023,hydro,0.1
ZA,2024,coal,0.75
ZA,2024,solar,0.15
ZA,2024,hydro,0.1
EG,2023,gas,0.9
EG,2023,hydro,0.1
CG,2023,hydro,1.0
"""

INTENSITY_CSV = """fuel,l_per_kwh
coal,1.9
gas,0.9
hydro,17.0
solar,0.0
"""


@pytest.fixture
def fuel_mix_text():
    return FUEL_MIX_CSV


@pytest.fixture
def intensity_text():
    return INTENSITY_CSV


@pytest.fixture
def stream():
    def make(text, name="<test>"):
        buf = io.StringIO(text)
        buf.name = name
        return buf

    return make
