"""Decoupled safety layer.

Surrogate models of each asset's realized power are fitted from logged
operation data and give the constraint check its predictions: an action is
feasible when the predicted thermal production stays within q_tol of the
demand.  The layer needs no derivative information and knows nothing about
the controller that queries it.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plant as plant_mod
from .forest import BaggedTreeRegressor, ForestArena
from .plant import A_BESS, A_BOIL, A_CHP, A_HP, A_TESS, PlantConfig
from .shield import fallback_policy
from .timeseries import ExogenousSeries

THERMAL_ASSETS = ("boiler", "hp", "chp", "tess")
LOGGED_ASSETS = THERMAL_ASSETS + ("bess",)

#: shared feature vector layout used by the checker and the fitted models
GLOBAL_FEATURES = (
    "action_boiler",
    "boiler_on",
    "action_hp",
    "hp_on",
    "action_chp",
    "chp_on",
    "action_tess",
    "action_bess",
    "ambient_temp",
    "soc_tess",
    "soc_bess",
)

ASSET_FEATURES = {
    "boiler": ("action_boiler", "boiler_on", "ambient_temp"),
    "hp": ("action_hp", "hp_on", "ambient_temp"),
    "chp": ("action_chp", "chp_on", "ambient_temp"),
    "tess": ("action_tess", "soc_tess"),
    "bess": ("action_bess", "soc_bess"),
}

_ACTION_IDX = {"boiler": A_BOIL, "hp": A_HP, "chp": A_CHP, "tess": A_TESS, "bess": A_BESS}

MIN_LOG_ROWS = 100


class SafetyError(ValueError):
    """Invalid inputs to the safety layer."""


class DegenerateLogError(SafetyError):
    """A fit target or feature carries no information."""


@dataclass(frozen=True)
class FitMetrics:
    """Holdout quality of one surrogate; NMAE is MAE over the target range."""

    r2: float
    mae: float
    nmae: float


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of one constraint check (thermal balance, surrogate-predicted)."""

    residual: float  # MW_th, predicted production minus demand
    q_tol: float  # MW_th
    feasible: bool
    per_asset_pred: dict

    def __post_init__(self):
        assert self.feasible == (abs(self.residual) <= self.q_tol)


class OperationLog:
    """Rows of (raw actions, exogenous/state features, realized powers) per step."""

    CSV_COLUMNS = (
        "action_boiler",
        "action_hp",
        "action_chp",
        "action_tess",
        "action_bess",
        "feature_ambient_temp",
        "feature_soc_tess",
        "feature_soc_bess",
        "q_boiler",
        "q_hp",
        "q_chp",
        "q_tess",
        "q_bess",
    )

    def __init__(self, actions, ambient, soc_tess, soc_bess, targets):
        self.actions = np.asarray(actions, dtype=float)  # (n, 5)
        self.ambient = np.asarray(ambient, dtype=float)
        self.soc_tess = np.asarray(soc_tess, dtype=float)
        self.soc_bess = np.asarray(soc_bess, dtype=float)
        self.targets = np.asarray(targets, dtype=float)  # (n, 5) realized powers, LOGGED_ASSETS order
        n = self.actions.shape[0]
        if self.actions.shape != (n, 5) or self.targets.shape != (n, 5):
            raise SafetyError("inconsistent log column shapes")
        for col in (self.ambient, self.soc_tess, self.soc_bess):
            if col.shape != (n,):
                raise SafetyError("inconsistent log column shapes")

    def __len__(self) -> int:
        return self.actions.shape[0]

    def feature_matrix(self, off_threshold: float) -> np.ndarray:
        """Rows of the shared GLOBAL_FEATURES vector."""
        on = (self.actions >= off_threshold).astype(float)
        return np.column_stack(
            [
                self.actions[:, A_BOIL],
                on[:, A_BOIL],
                self.actions[:, A_HP],
                on[:, A_HP],
                self.actions[:, A_CHP],
                on[:, A_CHP],
                self.actions[:, A_TESS],
                self.actions[:, A_BESS],
                self.ambient,
                self.soc_tess,
                self.soc_bess,
            ]
        )

    def to_csv(self, path) -> None:
        header = ",".join(self.CSV_COLUMNS)
        body = np.column_stack(
            [self.actions, self.ambient, self.soc_tess, self.soc_bess, self.targets]
        )
        lines = [header]
        for row in body:
            lines.append(",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "OperationLog":
        lines = Path(path).read_text().splitlines()
        if not lines or tuple(lines[0].split(",")) != cls.CSV_COLUMNS:
            raise SafetyError(f"bad operation-log header in {path}")
        data = np.array(
            [[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()]
        )
        return cls(data[:, 0:5], data[:, 5], data[:, 6], data[:, 7], data[:, 8:13])


def default_log_policy(config: PlantConfig, noise_std: float = 0.35):
    """Safe fallback policy dithered by exploration noise.

    The boiler/CHP components track the fallback rule with Gaussian noise so
    the log stays roughly balanced; heat pump and storages are explored
    uniformly, which is what gives their surrogates coverage of the full
    action range.
    """

    def policy(exo, state, rng) -> np.ndarray:
        a = fallback_policy(exo.thermal_demand, config).copy()
        a[A_BOIL] = min(1.0, max(-1.0, a[A_BOIL] + rng.normal(0.0, noise_std)))
        a[A_CHP] = min(1.0, max(-1.0, a[A_CHP] + rng.normal(0.0, noise_std)))
        a[[A_HP, A_TESS, A_BESS]] = rng.uniform(-1.0, 1.0, 3)
        return a

    return policy


def collect_log(
    config: PlantConfig,
    series: ExogenousSeries,
    policy,
    n_steps: int,
    seed: int = 0,
) -> OperationLog:
    """Roll the plant under the given action source and record realized powers.

    policy is any callable (exo, state, rng) -> action; None selects the
    default fallback-plus-noise policy.  Wraps around the series if n_steps
    exceeds its length.  Deterministic given (series, policy, seed).
    """
    if n_steps < MIN_LOG_ROWS:
        raise SafetyError(f"need at least {MIN_LOG_ROWS} log steps, got {n_steps}")
    if policy is None:
        policy = default_log_policy(config)
    rng = np.random.default_rng(seed)
    state = plant_mod.reset(config)
    actions = np.empty((n_steps, 5))
    ambient = np.empty(n_steps)
    soc_tess = np.empty(n_steps)
    soc_bess = np.empty(n_steps)
    targets = np.empty((n_steps, 5))
    for k in range(n_steps):
        exo = series.record(k % len(series))
        a = np.asarray(policy(exo, state, rng), dtype=float)
        actions[k] = a
        ambient[k] = exo.ambient_temp
        soc_tess[k] = state.soc_tess
        soc_bess[k] = state.soc_bess
        state, out = plant_mod.step(state, a, exo, config)
        targets[k] = (out.q_boil, out.q_hp, out.q_chp, out.q_tess, out.p_bess)
    return OperationLog(actions, ambient, soc_tess, soc_bess, targets)


class PiecewiseLinearModel:
    """Least-squares line on the active rows, zero when the asset is gated off.

    The simple fallback mode for surrogates: fit on (action, one exogenous
    feature) only.
    """

    def __init__(self, gate_column: int | None):
        self.gate_column = gate_column
        self.coef: np.ndarray | None = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "PiecewiseLinearModel":
        if self.gate_column is not None:
            active = X[:, self.gate_column] > 0.5
        else:
            active = np.ones(X.shape[0], dtype=bool)
        if active.sum() < 2:
            raise DegenerateLogError("too few active rows for a linear fit")
        design = np.column_stack([np.ones(int(active.sum())), X[active]])
        self.coef, *_ = np.linalg.lstsq(design, y[active], rcond=None)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.column_stack([np.ones(X.shape[0]), X]) @ self.coef
        if self.gate_column is not None:
            out = np.where(X[:, self.gate_column] > 0.5, out, 0.0)
        return out


@dataclass
class SurrogateModel:
    """Predictor of one asset's realized power from (action, features)."""

    asset: str
    model: object
    feature_names: tuple
    fit_metrics: FitMetrics
    clip_lo: float
    clip_hi: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.clip(self.model.predict(X), self.clip_lo, self.clip_hi)


def _asset_envelope(asset: str, config: PlantConfig) -> tuple[float, float]:
    if asset == "boiler":
        return 0.0, config.boiler.p_nom_th
    if asset == "hp":
        return 0.0, config.heat_pump.p_nom_th
    if asset == "chp":
        return 0.0, config.chp.p_nom_th
    if asset == "tess":
        return config.tess.p_min_signed, config.tess.p_max_signed
    if asset == "bess":
        return config.bess.p_min_signed, config.bess.p_max_signed
    raise SafetyError(f"unknown asset {asset}")


def fit_surrogates(
    log: OperationLog,
    config: PlantConfig,
    holdout_frac: float = 0.25,
    seed: int = 0,
    mode: str = "forest",
    n_trees: int = 30,
    max_depth: int = 14,
    min_samples_leaf: int = 3,
) -> dict:
    """Fit one surrogate per logged asset; metrics come from the holdout split only."""
    if not 0.0 < holdout_frac <= 0.5:
        raise SafetyError("holdout_frac must lie in (0, 0.5]")
    if len(log) < MIN_LOG_ROWS:
        raise SafetyError(f"log too small: {len(log)} rows")
    if mode not in ("forest", "linear"):
        raise SafetyError(f"unknown surrogate mode {mode!r}")
    features = log.feature_matrix(config.off_threshold)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(log))
    n_hold = max(1, int(round(holdout_frac * len(log))))
    hold, train = perm[:n_hold], perm[n_hold:]

    out: dict = {}
    for ai, asset in enumerate(LOGGED_ASSETS):
        names = ASSET_FEATURES[asset]
        cols = [GLOBAL_FEATURES.index(n) for n in names]
        X = features[:, cols]
        y = log.targets[:, ai]
        if y[train].max() - y[train].min() < 1e-12:
            raise DegenerateLogError(f"constant target for asset {asset!r}")
        if mode == "forest":
            model = BaggedTreeRegressor(
                n_trees=n_trees,
                max_depth=max_depth,
                min_samples_leaf=min_samples_leaf,
                seed=int(rng.integers(0, 2**31)),
            ).fit(X[train], y[train])
        else:
            gate = None
            for gi, n in enumerate(names):
                if n.endswith("_on"):
                    gate = gi
            model = PiecewiseLinearModel(gate).fit(X[train], y[train])
        lo, hi = _asset_envelope(asset, config)
        pred = np.clip(model.predict(X[hold]), lo, hi)
        err = pred - y[hold]
        mae = float(np.abs(err).mean())
        rng_y = float(y[hold].max() - y[hold].min())
        ss_tot = float(((y[hold] - y[hold].mean()) ** 2).sum())
        r2 = 1.0 - float((err**2).sum()) / ss_tot if ss_tot > 0 else float("nan")
        out[asset] = SurrogateModel(
            asset=asset,
            model=model,
            feature_names=names,
            fit_metrics=FitMetrics(r2=r2, mae=mae, nmae=mae / rng_y),
            clip_lo=lo,
            clip_hi=hi,
        )
    return out


class SafetyChecker:
    """Relaxed thermal-balance check over the fitted surrogates.

    feasible iff |sum of predicted thermal powers - demand| <= q_tol, with
    the boundary counted as feasible.  Pure and side-effect free; callable
    concurrently once built.
    """

    FORMAT = "safeems-surrogates"
    VERSION = 1

    def __init__(self, surrogates: dict, q_tol: float, off_threshold: float):
        if q_tol <= 0.0:
            raise SafetyError("q_tol must be positive")
        missing = [a for a in THERMAL_ASSETS if a not in surrogates]
        if missing:
            raise SafetyError(f"missing surrogates for {missing}")
        self.surrogates = surrogates
        self.q_tol = float(q_tol)
        self.off_threshold = float(off_threshold)
        self._arena = None
        if all(
            isinstance(surrogates[a].model, BaggedTreeRegressor) for a in THERMAL_ASSETS
        ):
            maps = []
            for asset in THERMAL_ASSETS:
                names = surrogates[asset].feature_names
                maps.append(np.array([GLOBAL_FEATURES.index(n) for n in names]))
            self._arena = ForestArena(
                [surrogates[a].model for a in THERMAL_ASSETS], maps
            )
            self._clip_lo = np.array([surrogates[a].clip_lo for a in THERMAL_ASSETS])
            self._clip_hi = np.array([surrogates[a].clip_hi for a in THERMAL_ASSETS])

    def feature_vector(self, action: np.ndarray, exo, state) -> np.ndarray:
        thr = self.off_threshold
        return np.array(
            [
                action[A_BOIL],
                1.0 if action[A_BOIL] >= thr else 0.0,
                action[A_HP],
                1.0 if action[A_HP] >= thr else 0.0,
                action[A_CHP],
                1.0 if action[A_CHP] >= thr else 0.0,
                action[A_TESS],
                action[A_BESS],
                exo.ambient_temp,
                state.soc_tess,
                state.soc_bess,
            ]
        )

    def check(self, action: np.ndarray, exo, state, demand: float | None = None) -> ConstraintReport:
        action = np.asarray(action, dtype=float)
        if action.shape != (5,) or not np.all(np.isfinite(action)):
            raise SafetyError("action must be a finite 5-vector")
        if demand is None:
            demand = exo.thermal_demand
        if not np.isfinite(demand):
            raise SafetyError("non-finite demand")
        x = self.feature_vector(action, exo, state)
        if self._arena is not None:
            preds = np.clip(self._arena.predict_single(x), self._clip_lo, self._clip_hi)
            per_asset = dict(zip(THERMAL_ASSETS, (float(p) for p in preds)))
        else:
            per_asset = {}
            for asset in THERMAL_ASSETS:
                sur = self.surrogates[asset]
                cols = [GLOBAL_FEATURES.index(n) for n in sur.feature_names]
                per_asset[asset] = float(sur.predict(x[cols][None, :])[0])
        residual = sum(per_asset.values()) - float(demand)
        return ConstraintReport(
            residual=residual,
            q_tol=self.q_tol,
            feasible=abs(residual) <= self.q_tol,
            per_asset_pred=per_asset,
        )

    def save(self, path) -> None:
        payload = {
            "format": self.FORMAT,
            "version": self.VERSION,
            "q_tol": self.q_tol,
            "off_threshold": self.off_threshold,
            "surrogates": self.surrogates,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "SafetyChecker":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload.get("format") != cls.FORMAT:
            raise SafetyError(f"not a surrogate file: {path}")
        if payload.get("version") != cls.VERSION:
            raise SafetyError(f"unsupported surrogate file version {payload.get('version')}")
        return cls(payload["surrogates"], payload["q_tol"], payload["off_threshold"])


def episode_tolerance(production, demand) -> float:
    """Summed absolute thermal imbalance relative to total demand.

    0.0 means the equality constraint held at every step; 1.0 is a total
    shortfall.  Scale-invariant.
    """
    production = np.asarray(production, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if production.size == 0 or production.shape != demand.shape:
        raise SafetyError("trace must be non-empty with matching shapes")
    total = demand.sum()
    if total <= 0.0:
        raise SafetyError("total demand must be positive")
    return float(np.abs(production - demand).sum() / total)


def q_tol_from_series(series: ExogenousSeries, fraction: float = 0.15) -> float:
    """Per-step tolerance: a fraction of the series' mean thermal demand."""
    if fraction <= 0.0:
        raise SafetyError("tolerance fraction must be positive")
    return float(fraction * series.thermal.mean())
