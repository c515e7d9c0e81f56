"""Exogenous driving series at 15-minute resolution.

Carries everything the plant and the agent cannot influence: thermal and
electrical demand, wind/solar infeed potential, day-ahead electricity price
and ambient temperature.  Series are immutable after construction and can be
loaded from CSV, written back, sliced into windows, or synthesized.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

STEP_HOURS = 0.25
STEPS_PER_DAY = 96
STEPS_PER_WEEK = 7 * STEPS_PER_DAY

CSV_COLUMNS = (
    "index",
    "thermal_demand_mw",
    "electrical_demand_mw",
    "wind_potential",
    "solar_potential",
    "price_eur_mwh",
    "ambient_temp_c",
)


class SeriesError(ValueError):
    """Malformed or inconsistent exogenous data."""


@dataclass(frozen=True)
class ExogenousRecord:
    """One 15-minute step of exogenous data."""

    timestamp_index: int
    thermal_demand: float  # MW_th
    electrical_demand: float  # MW_e
    wind_potential: float  # fraction of nominal, [0, 1]
    solar_potential: float  # fraction of nominal, [0, 1]
    price_elec: float  # EUR/MWh
    ambient_temp: float  # deg C

    @property
    def hour_of_day(self) -> float:
        """Fractional hour in [0, 23.75]."""
        return (self.timestamp_index % STEPS_PER_DAY) * STEP_HOURS

    @property
    def day_of_week(self) -> int:
        """0 = Monday .. 6 = Sunday (index 0 is taken as Monday 00:00)."""
        return (self.timestamp_index // STEPS_PER_DAY) % 7


class ExogenousSeries:
    """Immutable column store of ExogenousRecords, indices 0..n-1 with no gaps."""

    __slots__ = ("thermal", "electrical", "wind", "solar", "price", "ambient", "step_hours")

    def __init__(self, thermal, electrical, wind, solar, price, ambient):
        arrays = [np.asarray(a, dtype=float) for a in (thermal, electrical, wind, solar, price, ambient)]
        n = arrays[0].shape[0]
        if n == 0:
            raise SeriesError("series must be non-empty")
        if any(a.shape != (n,) for a in arrays):
            raise SeriesError("series columns must have equal length")
        if any(not np.all(np.isfinite(a)) for a in arrays):
            raise SeriesError("series contains non-finite values")
        if np.any(arrays[0] < 0) or np.any(arrays[1] < 0):
            raise SeriesError("demands must be non-negative")
        for a in (arrays[2], arrays[3]):
            if np.any(a < 0) or np.any(a > 1):
                raise SeriesError("wind/solar potential must lie in [0, 1]")
        for name, a in zip(self.__slots__, arrays):
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        object.__setattr__(self, "step_hours", STEP_HOURS)

    def __setattr__(self, name, value):
        raise AttributeError("ExogenousSeries is immutable")

    def __len__(self) -> int:
        return self.thermal.shape[0]

    def record(self, i: int) -> ExogenousRecord:
        if not 0 <= i < len(self):
            raise IndexError(f"record index {i} out of range 0..{len(self) - 1}")
        return ExogenousRecord(
            timestamp_index=i,
            thermal_demand=float(self.thermal[i]),
            electrical_demand=float(self.electrical[i]),
            wind_potential=float(self.wind[i]),
            solar_potential=float(self.solar[i]),
            price_elec=float(self.price[i]),
            ambient_temp=float(self.ambient[i]),
        )

    @property
    def records(self) -> list[ExogenousRecord]:
        return [self.record(i) for i in range(len(self))]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExogenousSeries):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__slots__[:6])


def _fmt(x: float) -> str:
    # shortest round-trip decimal representation
    return repr(float(x))


def write_series(series: ExogenousSeries, path) -> None:
    """Write a series to CSV using canonical (shortest round-trip) floats."""
    lines = [",".join(CSV_COLUMNS)]
    for i in range(len(series)):
        lines.append(
            ",".join(
                [str(i)]
                + [
                    _fmt(col[i])
                    for col in (
                        series.thermal,
                        series.electrical,
                        series.wind,
                        series.solar,
                        series.price,
                        series.ambient,
                    )
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_series(path) -> ExogenousSeries:
    """Parse a CSV file following the canonical schema into a series.

    Raises SeriesError with the offending row number for malformed rows,
    index gaps and negative demands; FileNotFoundError for a missing file.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"series file not found: {p}")
    lines = p.read_text().splitlines()
    if not lines or tuple(lines[0].strip().split(",")) != CSV_COLUMNS:
        raise SeriesError(f"bad or missing header in {p}")
    cols: list[list[float]] = [[] for _ in range(6)]
    expected = 0
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise SeriesError(f"malformed row {row_no}: expected 7 fields, got {len(parts)}")
        try:
            idx = int(parts[0])
            values = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise SeriesError(f"malformed row {row_no}: {exc}") from exc
        if idx != expected:
            if idx > expected:
                raise SeriesError(f"gap at index {expected} (row {row_no})")
            raise SeriesError(f"non-increasing index {idx} at row {row_no}")
        if values[0] < 0 or values[1] < 0:
            raise SeriesError(f"negative demand at row {row_no}")
        for c, v in zip(cols, values):
            c.append(v)
        expected += 1
    if expected == 0:
        raise SeriesError(f"no data rows in {p}")
    return ExogenousSeries(*cols)


def window(series: ExogenousSeries, start: int, length: int) -> ExogenousSeries:
    """Slice [start, start+length) with indices re-based to 0."""
    if start < 0 or length < 1 or start + length > len(series):
        raise SeriesError(
            f"window [{start}, {start + length}) out of range for series of {len(series)}"
        )
    sl = slice(start, start + length)
    return ExogenousSeries(
        series.thermal[sl],
        series.electrical[sl],
        series.wind[sl],
        series.solar[sl],
        series.price[sl],
        series.ambient[sl],
    )


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    kernel = np.ones(width) / width
    return np.convolve(x, kernel, mode="same")


def synth_profiles(seed: int, n_steps: int) -> ExogenousSeries:
    """Synthesize a deterministic exogenous series with daily and weekly structure.

    Thermal/electrical demand: base level x daily sinusoid x weekday/weekend
    factor x mild seasonal swing, plus seeded Gaussian noise, clipped at 0.
    Peak thermal demand stays below 2.5 MW_th.  Solar is a clipped daylight
    sinusoid scaled by a smoothed clearness process, wind a clipped AR(1)
    walk, the price a two-peak day-ahead-like profile.  Pure function of
    (seed, n_steps).
    """
    if n_steps < 1:
        raise SeriesError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    i = np.arange(n_steps)
    hod = (i % STEPS_PER_DAY) * STEP_HOURS
    dow = (i // STEPS_PER_DAY) % 7
    day = (i // STEPS_PER_DAY) % 365
    weekend = dow >= 5
    season = np.cos(2.0 * np.pi * day / 365.0)  # +1 in mid-winter (index 0 = Jan 1)

    noise_th = rng.normal(0.0, 0.05, n_steps)
    noise_el = rng.normal(0.0, 0.04, n_steps)
    wind_eps = rng.normal(0.0, 0.055, n_steps)
    clear_eps = rng.normal(0.0, 1.0, n_steps)
    noise_pr = rng.normal(0.0, 3.0, n_steps)
    noise_tm = rng.normal(0.0, 0.8, n_steps)

    daily_th = 1.0 + 0.30 * np.cos(2.0 * np.pi * (hod - 7.0) / 24.0)
    wk_th = np.where(weekend, 0.82, 1.0)
    thermal = np.clip(0.90 * wk_th * daily_th * (1.0 + 0.10 * season) + noise_th, 0.0, None)

    daily_el = 1.0 + 0.35 * np.cos(2.0 * np.pi * (hod - 11.0) / 24.0)
    wk_el = np.where(weekend, 0.75, 1.0)
    electrical = np.clip(0.80 * wk_el * daily_el * (1.0 + 0.05 * season) + noise_el, 0.0, None)

    # AR(1) kept inside [0, 1] by clipping the state itself
    wind = np.empty(n_steps)
    w = 0.35
    for k in range(n_steps):
        w = min(1.0, max(0.0, 0.35 + 0.92 * (w - 0.35) + wind_eps[k]))
        wind[k] = w

    daylight = np.clip(np.sin(np.pi * (hod - 6.5) / 11.0), 0.0, None)
    clearness = np.clip(0.75 + 0.35 * _smooth(clear_eps, 16), 0.15, 1.0)
    solar = np.clip(daylight ** 1.2 * (1.0 - 0.45 * season) * clearness, 0.0, 1.0)

    bump_morning = np.exp(-0.5 * ((hod - 8.5) / 2.0) ** 2)
    bump_evening = np.exp(-0.5 * ((hod - 19.0) / 2.5) ** 2)
    wk_pr = np.where(weekend, 0.88, 1.0)
    price = np.clip(
        (38.0 + 16.0 * bump_morning + 20.0 * bump_evening) * wk_pr * (1.0 + 0.08 * season)
        + noise_pr,
        1.0,
        None,
    )

    ambient = 11.0 - 9.0 * season + 4.0 * np.sin(2.0 * np.pi * (hod - 8.0) / 24.0) + noise_tm

    return ExogenousSeries(thermal, electrical, wind, solar, price, ambient)
