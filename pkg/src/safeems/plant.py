"""Discrete-time simulator of the multi-energy plant.

One 15-minute step maps (state, action, exogenous record) to realized asset
powers and the next physical state.  The boiler, heat pump and CHP decode to
semi-continuous set-points ({off} plus a power band), the two storages to
signed power.  Storage state of charge is bookkept exactly: when a requested
flow would push SOC past [0, 1] the realized power is curtailed to whatever
the bound admits.  All functions are pure; the electrical grid connection is
the slack bus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timeseries import STEP_HOURS

#: action vector layout
ACTION_ASSETS = ("boiler", "hp", "chp", "tess", "bess")
A_BOIL, A_HP, A_CHP, A_TESS, A_BESS = range(5)


class PlantError(ValueError):
    """Invalid plant configuration or inputs."""


class DegenerateTemperatureError(PlantError):
    """Condenser temperature not above evaporator temperature."""


@dataclass(frozen=True)
class AssetSpec:
    """Physical envelope of one asset.

    p_nom_th / p_nom_el are nominal thermal / electrical power (0 if the
    asset has none), p_min_frac the minimum stable output as a fraction of
    nominal, e_nom the storage capacity (0 for non-storage), and the signed
    bounds apply to storage power (discharge positive).
    """

    name: str
    p_nom_th: float = 0.0
    p_nom_el: float = 0.0
    p_min_frac: float = 0.0
    e_nom: float = 0.0
    p_min_signed: float = 0.0
    p_max_signed: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_min_frac <= 1.0:
            raise PlantError(f"{self.name}: p_min_frac must lie in [0, 1]")
        if self.e_nom < 0.0:
            raise PlantError(f"{self.name}: e_nom must be >= 0")
        if self.p_min_signed > self.p_max_signed:
            raise PlantError(f"{self.name}: p_min_signed > p_max_signed")


@dataclass(frozen=True)
class PlantConfig:
    """Asset envelopes plus every plant-dynamics constant."""

    boiler: AssetSpec
    heat_pump: AssetSpec
    chp: AssetSpec
    tess: AssetSpec
    bess: AssetSpec
    wind: AssetSpec
    solar: AssetSpec
    transformer: AssetSpec
    boiler_eff: float = 0.90
    chp_th_eff: float = 0.45
    chp_el_eff: float = 0.36
    hp_cop_max: float = 4.5
    hp_carnot_fraction: float = 0.5
    tess_loss_per_step: float = 0.001
    bess_roundtrip_eff: float = 0.92
    gas_price: float = 35.0  # EUR/MWh fuel
    t_cond: float = 70.0  # deg C, fixed condenser temperature
    t_return_boiler: float = 60.0  # deg C
    tess_temp_lo: float = 60.0  # deg C at SOC 0
    tess_temp_hi: float = 90.0  # deg C at SOC 1
    off_threshold: float = -0.6  # raw action below this decodes to "off"

    def __post_init__(self):
        for name in ("boiler_eff", "chp_th_eff", "chp_el_eff", "bess_roundtrip_eff"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise PlantError(f"{name} must lie in (0, 1]")
        if self.hp_cop_max < 1.0:
            raise PlantError("hp_cop_max must be >= 1")
        if not 0.0 <= self.tess_loss_per_step < 1.0:
            raise PlantError("tess_loss_per_step must lie in [0, 1)")
        if not -1.0 < self.off_threshold < 1.0:
            raise PlantError("off_threshold must lie in (-1, 1)")

    @property
    def hp_p_el_max(self) -> float:
        """Electrical input that yields nominal heat at maximum COP."""
        return self.heat_pump.p_nom_th / self.hp_cop_max

    @property
    def hp_p_el_min(self) -> float:
        return self.heat_pump.p_min_frac * self.hp_p_el_max


def default_plant_config() -> PlantConfig:
    """Plant dimensions of the reference multi-energy system."""
    inf = math.inf
    return PlantConfig(
        boiler=AssetSpec("boiler", p_nom_th=2.0, p_min_frac=0.10),
        heat_pump=AssetSpec("hp", p_nom_th=1.0, p_min_frac=0.25),
        chp=AssetSpec("chp", p_nom_th=1.0, p_nom_el=0.8, p_min_frac=0.50),
        tess=AssetSpec("tess", e_nom=3.5, p_min_signed=-0.5, p_max_signed=0.5),
        bess=AssetSpec("bess", e_nom=2.0, p_min_signed=-0.5, p_max_signed=0.5),
        wind=AssetSpec("wind", p_nom_el=0.8, p_min_frac=0.015),
        solar=AssetSpec("solar", p_nom_el=1.0),
        transformer=AssetSpec("transformer", p_min_signed=-inf, p_max_signed=inf),
    )


@dataclass(frozen=True)
class PlantState:
    """Physical state between steps; SOCs as fractions of capacity."""

    soc_tess: float
    soc_bess: float
    t_tess_mean: float  # deg C, drifts linearly with SOC
    t_return_boiler: float  # deg C
    t_evap: float  # deg C, tracks ambient temperature
    t_cond: float  # deg C

    def __post_init__(self):
        if not (0.0 <= self.soc_tess <= 1.0 and 0.0 <= self.soc_bess <= 1.0):
            raise PlantError("SOC out of [0, 1]")


@dataclass(frozen=True)
class StepOutputs:
    """Realized powers of one step.

    Thermal powers in MW_th (TESS discharge positive), electrical in MW_e
    (BESS discharge positive, grid import positive), gas_power the fuel
    power drawn by boiler and CHP.
    """

    q_boil: float
    q_hp: float
    q_chp: float
    q_tess: float
    p_hp: float
    p_chp: float
    p_bess: float
    p_wind: float
    p_solar: float
    p_grid: float
    gas_power: float

    @property
    def thermal_production(self) -> float:
        return self.q_boil + self.q_hp + self.q_chp + self.q_tess


@dataclass(frozen=True)
class DecodedAction:
    """Per-asset set-points after decoding a raw [-1, 1] action vector.

    The heat pump set-point is electrical (compressor power); its thermal
    output is that times the COP, so nominal heat is reached only at maximum
    COP.
    """

    boiler_on: bool
    q_boil_set: float
    hp_on: bool
    p_hp_el_set: float
    chp_on: bool
    q_chp_set: float
    q_tess_set: float
    p_bess_set: float


def reset(config: PlantConfig, seed: int = 0) -> PlantState:
    """Initial state: both storages half full, temperatures at defaults.

    Deterministic; the seed is accepted for interface stability only.
    """
    del seed
    return PlantState(
        soc_tess=0.5,
        soc_bess=0.5,
        t_tess_mean=config.tess_temp_lo + 0.5 * (config.tess_temp_hi - config.tess_temp_lo),
        t_return_boiler=config.t_return_boiler,
        t_evap=10.0,
        t_cond=config.t_cond,
    )


def _semicontinuous(raw: float, lo: float, hi: float, off_threshold: float) -> tuple[bool, float]:
    if raw < off_threshold:
        return False, 0.0
    frac = (raw - off_threshold) / (1.0 - off_threshold)
    return True, lo + frac * (hi - lo)


def decode_action(raw: np.ndarray, config: PlantConfig) -> DecodedAction:
    """Map a raw action in [-1, 1]^5 to per-asset set-points.

    Boiler/HP/CHP are semi-continuous: below the off-threshold the asset is
    off, above it the remaining range maps linearly onto [P_min, P_max].
    TESS/BESS map [-1, 1] linearly onto their signed power bounds.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (5,):
        raise PlantError(f"action must have 5 components, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise PlantError("action contains non-finite components")
    if np.any(raw < -1.0) or np.any(raw > 1.0):
        raise PlantError("action components must lie in [-1, 1]")
    thr = config.off_threshold
    b = config.boiler
    boiler_on, q_boil = _semicontinuous(raw[A_BOIL], b.p_min_frac * b.p_nom_th, b.p_nom_th, thr)
    hp_on, p_hp_el = _semicontinuous(raw[A_HP], config.hp_p_el_min, config.hp_p_el_max, thr)
    c = config.chp
    chp_on, q_chp = _semicontinuous(raw[A_CHP], c.p_min_frac * c.p_nom_th, c.p_nom_th, thr)
    t = config.tess
    q_tess = t.p_min_signed + 0.5 * (raw[A_TESS] + 1.0) * (t.p_max_signed - t.p_min_signed)
    e = config.bess
    p_bess = e.p_min_signed + 0.5 * (raw[A_BESS] + 1.0) * (e.p_max_signed - e.p_min_signed)
    return DecodedAction(boiler_on, q_boil, hp_on, p_hp_el, chp_on, q_chp, q_tess, p_bess)


def hp_cop(state: PlantState, exo, config: PlantConfig) -> float:
    """Carnot-fraction COP model, capped at the configured maximum.

    The evaporator sits at ambient temperature, the condenser at its fixed
    set-point; requires t_cond > t_evap.
    """
    t_evap = exo.ambient_temp
    t_cond = state.t_cond
    if t_cond <= t_evap:
        raise DegenerateTemperatureError(
            f"t_cond ({t_cond}) must exceed t_evap ({t_evap})"
        )
    carnot = (t_cond + 273.15) / (t_cond - t_evap)
    return max(1.0, min(config.hp_cop_max, config.hp_carnot_fraction * carnot))


def _storage_flow(power_set: float, soc: float, e_nom: float, charge_eff: float) -> tuple[float, float]:
    """Curtail a signed storage power (discharge positive) to what SOC admits.

    Returns (realized_power, soc_after_flow).  charge_eff < 1 loses part of
    the charged energy before it reaches the store.
    """
    if e_nom <= 0.0 or power_set == 0.0:
        return 0.0, soc
    if power_set > 0.0:  # discharge
        max_power = soc * e_nom / STEP_HOURS
        realized = min(power_set, max_power)
        return realized, soc - realized * STEP_HOURS / e_nom
    max_charge = (1.0 - soc) * e_nom / (STEP_HOURS * charge_eff)
    realized = -min(-power_set, max_charge)
    return realized, soc - realized * STEP_HOURS * charge_eff / e_nom


def step(state: PlantState, action: np.ndarray, exo, config: PlantConfig) -> tuple[PlantState, StepOutputs]:
    """Execute one 15-minute step; pure function of its arguments."""
    if not all(
        np.isfinite(v)
        for v in (
            exo.thermal_demand,
            exo.electrical_demand,
            exo.wind_potential,
            exo.solar_potential,
            exo.price_elec,
            exo.ambient_temp,
        )
    ):
        raise PlantError("exogenous record contains non-finite values")
    dec = decode_action(action, config)

    q_boil = dec.q_boil_set
    if dec.hp_on:
        cop = hp_cop(state, exo, config)
        p_hp = dec.p_hp_el_set
        q_hp = p_hp * cop
    else:
        p_hp = 0.0
        q_hp = 0.0
    q_chp = dec.q_chp_set
    p_chp = q_chp * config.chp_el_eff / config.chp_th_eff

    q_tess, soc_tess_flow = _storage_flow(dec.q_tess_set, state.soc_tess, config.tess.e_nom, 1.0)
    soc_tess_next = soc_tess_flow * (1.0 - config.tess_loss_per_step)
    p_bess, soc_bess_next = _storage_flow(
        dec.p_bess_set, state.soc_bess, config.bess.e_nom, config.bess_roundtrip_eff
    )

    p_wind = exo.wind_potential * config.wind.p_nom_el
    p_solar = exo.solar_potential * config.solar.p_nom_el
    # grid is the slack bus: import covers whatever the node is short of
    p_grid = exo.electrical_demand + p_hp - p_wind - p_solar - p_chp - p_bess
    gas_power = q_boil / config.boiler_eff + q_chp / config.chp_th_eff

    lo, hi = config.tess_temp_lo, config.tess_temp_hi
    next_state = PlantState(
        soc_tess=soc_tess_next,
        soc_bess=soc_bess_next,
        t_tess_mean=lo + soc_tess_next * (hi - lo),
        t_return_boiler=config.t_return_boiler,
        t_evap=exo.ambient_temp,
        t_cond=config.t_cond,
    )
    outputs = StepOutputs(
        q_boil=q_boil,
        q_hp=q_hp,
        q_chp=q_chp,
        q_tess=q_tess,
        p_hp=p_hp,
        p_chp=p_chp,
        p_bess=p_bess,
        p_wind=p_wind,
        p_solar=p_solar,
        p_grid=p_grid,
        gas_power=gas_power,
    )
    return next_state, outputs
