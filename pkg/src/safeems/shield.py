"""Action shielding.

Two wrappers guarantee that every action reaching the plant passes the
constraint check.  SafeFallback swaps an infeasible proposal for the action
of a rule-based fallback policy and emits the executed tuple plus a
penalized hypothetical one.  GiveSafe keeps asking the agent for a new
action without advancing the plant, penalizing every rejected proposal.
Both are agnostic to what sits behind the agent interface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .plant import A_BESS, A_BOIL, A_CHP, A_HP, A_TESS, PlantConfig

log = logging.getLogger(__name__)


class ShieldBreachError(RuntimeError):
    """The fallback action itself failed the check; the safety contract is void."""


class RetryLimitError(RuntimeError):
    """GiveSafe exhausted its retry budget without a feasible proposal."""

    def __init__(self, retries: int):
        super().__init__(f"no feasible action after {retries} proposals")
        self.retries = retries


@dataclass(frozen=True)
class ExperienceTuple:
    """One (s, a, r, s', d) transition; synthetic tuples were never executed."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    synthetic: bool = False


@dataclass(frozen=True)
class ShieldConfig:
    """Penalty constants and the GiveSafe retry cap.

    A rejected GiveSafe proposal receives -(cost_givesafe_base -
    cost_givesafe_chp_bonus) when its raw CHP component exceeds
    chp_bonus_threshold, else -cost_givesafe_base.
    """

    cost_fallback: float = 1.0
    cost_givesafe_base: float = 50.0
    cost_givesafe_chp_bonus: float = 10.0
    chp_bonus_threshold: float = 0.5
    max_retries: int = 1000

    def __post_init__(self):
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    def givesafe_reward(self, action: np.ndarray) -> float:
        bonus = self.cost_givesafe_chp_bonus if action[A_CHP] > self.chp_bonus_threshold else 0.0
        return -(self.cost_givesafe_base - bonus)


def _encode_semicontinuous(q: float, lo: float, hi: float, off_threshold: float) -> float:
    """Inverse of the semi-continuous decode; projects q onto {0} on [lo, hi] first."""
    if q < 0.5 * lo:
        return -1.0
    q = min(hi, max(lo, q))
    return off_threshold + (q - lo) / (hi - lo) * (1.0 - off_threshold)


def _encode_signed(p: float, lo: float, hi: float) -> float:
    p = min(hi, max(lo, p))
    return -1.0 + 2.0 * (p - lo) / (hi - lo)


def fallback_policy(thermal_demand: float, config: PlantConfig) -> np.ndarray:
    """Priority rule covering the demand with CHP first, boiler for the rest.

    Below the CHP minimum the boiler alone tracks the demand; within the CHP
    band the CHP alone does; above it the CHP runs at maximum and the boiler
    covers the remainder.  Heat pump and storages stay off/idle.  Thermal
    targets are encoded back into raw action components.
    """
    if thermal_demand < 0.0:
        raise ValueError("thermal demand must be non-negative")
    chp = config.chp
    boiler = config.boiler
    q_min_chp = chp.p_min_frac * chp.p_nom_th
    q_max_chp = chp.p_nom_th
    q_max_boil = boiler.p_nom_th
    if thermal_demand < q_min_chp:
        q_chp, q_boil = 0.0, thermal_demand
    elif thermal_demand < q_max_chp:
        q_chp, q_boil = thermal_demand, 0.0
    else:
        q_chp, q_boil = q_max_chp, thermal_demand - q_max_chp
    if q_boil > q_max_boil:
        log.warning(
            "thermal demand %.3f MW exceeds boiler+CHP capacity; saturating", thermal_demand
        )
        q_boil = q_max_boil
    thr = config.off_threshold
    action = np.empty(5)
    action[A_BOIL] = _encode_semicontinuous(
        q_boil, boiler.p_min_frac * boiler.p_nom_th, q_max_boil, thr
    )
    action[A_HP] = -1.0
    action[A_CHP] = _encode_semicontinuous(q_chp, q_min_chp, q_max_chp, thr)
    action[A_TESS] = _encode_signed(0.0, config.tess.p_min_signed, config.tess.p_max_signed)
    action[A_BESS] = _encode_signed(0.0, config.bess.p_min_signed, config.bess.p_max_signed)
    return action


def safe_fallback_step(agent, env, cfg: ShieldConfig):
    """One shielded step: substitute the fallback action when the proposal fails.

    Returns (executed tuple, synthetic tuple or None).  When the proposal is
    overruled the synthetic tuple carries the proposal with reward r - c and
    the executed transition's s' and done flag.
    """
    s = env.obs
    exo = env.exo
    a = agent.propose(s)
    report = env.check(a)
    if report.feasible:
        a_safe, overruled = a, False
    else:
        a_safe = fallback_policy(exo.thermal_demand, env.config)
        fallback_report = env.check(a_safe)
        if not fallback_report.feasible:
            raise ShieldBreachError(
                f"fallback action infeasible (residual {fallback_report.residual:+.4f} MW, "
                f"q_tol {fallback_report.q_tol:.4f} MW)"
            )
        overruled = True
    s_next, r, done, info = env.step(a_safe)
    executed = ExperienceTuple(s, a_safe, r, s_next, done, synthetic=False)
    synthetic = None
    if overruled:
        synthetic = ExperienceTuple(s, a, r - cfg.cost_fallback, s_next, done, synthetic=True)
    return executed, synthetic


def give_safe_step(agent, env, cfg: ShieldConfig):
    """One shielded step: re-sample the agent until its proposal is feasible.

    Each rejected proposal yields a synthetic tuple with s' = s (the plant
    does not move) and the configured penalty as its reward.  Exactly one
    plant transition happens per call.  Raises RetryLimitError when the
    retry cap is exhausted.
    """
    s = env.obs
    synthetic = []
    a = agent.propose(s)
    report = env.check(a)
    retries = 0
    while not report.feasible:
        synthetic.append(ExperienceTuple(s, a, cfg.givesafe_reward(a), s, False, synthetic=True))
        retries += 1
        if retries >= cfg.max_retries:
            raise RetryLimitError(retries)
        a = agent.propose(s, retry=retries)
        report = env.check(a)
    s_next, r, done, info = env.step(a)
    executed = ExperienceTuple(s, a, r, s_next, done, synthetic=False)
    return executed, synthetic


class NoShield:
    """Pass-through wrapper: executes every proposal unchecked."""

    name = "none"

    def __init__(self):
        self.n_steps = 0
        self.n_interventions = 0

    def step(self, agent, env) -> list[ExperienceTuple]:
        s = env.obs
        a = agent.propose(s)
        s_next, r, done, info = env.step(a)
        self.n_steps += 1
        return [ExperienceTuple(s, a, r, s_next, done, synthetic=False)]


class SafeFallbackShield:
    """Stateful wrapper around safe_fallback_step with intervention counters."""

    name = "safe_fallback"

    def __init__(self, cfg: ShieldConfig):
        self.cfg = cfg
        self.n_steps = 0
        self.n_interventions = 0  # fallback substitutions

    def step(self, agent, env) -> list[ExperienceTuple]:
        executed, synthetic = safe_fallback_step(agent, env, self.cfg)
        self.n_steps += 1
        if synthetic is not None:
            self.n_interventions += 1
            return [executed, synthetic]
        return [executed]


class GiveSafeShield:
    """Stateful wrapper around give_safe_step with retry counters."""

    name = "give_safe"

    def __init__(self, cfg: ShieldConfig):
        self.cfg = cfg
        self.n_steps = 0
        self.n_interventions = 0  # rejected proposals across all steps

    def step(self, agent, env) -> list[ExperienceTuple]:
        executed, synthetic = give_safe_step(agent, env, self.cfg)
        self.n_steps += 1
        self.n_interventions += len(synthetic)
        return synthetic + [executed]


def make_shield(kind: str, cfg: ShieldConfig):
    if kind == "none":
        return NoShield()
    if kind == "safe_fallback":
        return SafeFallbackShield(cfg)
    if kind == "give_safe":
        return GiveSafeShield(cfg)
    raise ValueError(f"unknown shield kind {kind!r}")
