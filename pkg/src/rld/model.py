"""Domain types and scenario configuration for risk-limiting dispatch.

Unit conventions: energies are normalized so that the delivery-interval
total deficit D is order one (typically in [-1, 1]).  Accumulated market
positions x and threshold offsets share those units; per-stage quantities
are the interval totals divided by the number of delivery stages T.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ScenarioError(Exception):
    """Base class for scenario ingestion problems."""


class ParseError(ScenarioError):
    """Malformed scenario or curve file (schema breach)."""


class ValidationError(ScenarioError):
    """Well-formed input that violates a model invariant."""


BUY = "buy"
SELL = "sell"


@dataclass(frozen=True)
class MarketStage:
    index: int
    lead_time_hours: float
    price: float
    direction: str


@dataclass(frozen=True)
class MarketLadder:
    """Ordered recourse stages, earliest (longest lead time) first."""

    stages: tuple[MarketStage, ...]

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def prices(self) -> np.ndarray:
        return np.array([s.price for s in self.stages])

    @property
    def lead_times(self) -> np.ndarray:
        return np.array([s.lead_time_hours for s in self.stages])

    @property
    def directions(self) -> tuple[str, ...]:
        return tuple(s.direction for s in self.stages)

    @staticmethod
    def from_rows(rows) -> "MarketLadder":
        stages = tuple(
            MarketStage(index=i + 1, lead_time_hours=float(lt), price=float(p), direction=str(d))
            for i, (lt, p, d) in enumerate(rows)
        )
        return MarketLadder(stages)


@dataclass(frozen=True)
class StorageSpec:
    """Capacity and efficiency parameters of a fast storage device."""

    capacity: float
    storage_eff: float = 1.0    # carry-over between stages
    recharge_eff: float = 1.0
    discharge_eff: float = 1.0

    def __post_init__(self):
        if self.capacity < 0:
            raise ValidationError(f"storage.B: capacity must be >= 0, got {self.capacity}")
        for name, val in (
            ("lambda", self.storage_eff),
            ("mu", self.recharge_eff),
            ("nu", self.discharge_eff),
        ):
            if not 0.0 <= val <= 1.0:
                raise ValidationError(f"storage.{name}: efficiency must be in [0, 1], got {val}")

    @property
    def is_ideal(self) -> bool:
        return self.storage_eff == 1.0 and self.recharge_eff == 1.0 and self.discharge_eff == 1.0


@dataclass(frozen=True)
class CostModel:
    """Value-of-lost-load penalty per unit of unserved energy."""

    voll: float


@dataclass(frozen=True, eq=False)
class ForecastModel:
    """Per-delivery-stage predicted deficits and error standard deviations.

    Both arrays have length T and hold per-stage quantities (interval total
    divided by T for the means).  Errors are independent across stages.
    """

    n_stages: int
    d_hat: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d_hat, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        if d.shape != (self.n_stages,) or s.shape != (self.n_stages,):
            raise ValidationError("forecast: d_hat and sigma must have length T")
        if np.any(s < 0):
            raise ValidationError("forecast: sigma must be nonnegative")
        d.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "d_hat", d)
        object.__setattr__(self, "sigma", s)

    @property
    def constant_profile(self) -> bool:
        return bool(np.all(self.d_hat == self.d_hat[0]) and np.all(self.sigma == self.sigma[0]))

    @property
    def total_mean(self) -> float:
        return float(self.d_hat.sum())

    @staticmethod
    def constant(n_stages: int, d_hat: float, sigma: float) -> "ForecastModel":
        return ForecastModel(
            n_stages,
            np.full(n_stages, float(d_hat)),
            np.full(n_stages, float(sigma)),
        )


@dataclass(frozen=True, eq=False)
class ForecastErrorCurve:
    """Standard deviation of the horizon-ahead forecast error.

    Interpolation between tabulated horizons is linear in variance, the
    additive quantity for independent error increments.
    """

    horizons: np.ndarray    # strictly increasing
    sigmas: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.horizons, dtype=float)
        s = np.asarray(self.sigmas, dtype=float)
        if h.ndim != 1 or h.shape != s.shape or h.size < 1:
            raise ValidationError("curve: horizons and sigmas must be equal-length vectors")
        if np.any(np.diff(h) <= 0):
            raise ValidationError("curve: horizons must be strictly increasing")
        if np.any(s < 0):
            raise ValidationError("curve: sigma values must be nonnegative")
        if np.any(np.diff(s) < 0):
            raise ValidationError("curve: sigma must be nonincreasing as the horizon decreases")
        h.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "horizons", h)
        object.__setattr__(self, "sigmas", s)

    @property
    def max_horizon(self) -> float:
        return float(self.horizons[-1])

    @property
    def min_horizon(self) -> float:
        return float(self.horizons[0])

    def variance_at(self, horizon: float) -> float:
        if horizon < self.min_horizon or horizon > self.max_horizon:
            raise ValueError(
                f"horizon {horizon} outside curve range [{self.min_horizon}, {self.max_horizon}]"
            )
        return float(np.interp(horizon, self.horizons, self.sigmas**2))

    def sigma_at(self, horizon: float) -> float:
        return math.sqrt(self.variance_at(horizon))

    @staticmethod
    def from_table(rows) -> "ForecastErrorCurve":
        """Build from (horizon, sigma) rows sorted by decreasing horizon."""
        pts = [(float(h), float(s)) for h, s in rows]
        if any(pts[i][0] <= pts[i + 1][0] for i in range(len(pts) - 1)):
            raise ValidationError("curve: rows must be sorted by strictly decreasing horizon")
        pts.reverse()
        return ForecastErrorCurve(
            np.array([p[0] for p in pts]), np.array([p[1] for p in pts])
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete dispatch problem: markets, storage, penalty, forecast errors."""

    ladder: MarketLadder
    storage: StorageSpec
    cost: CostModel
    curve: ForecastErrorCurve
    n_delivery_stages: int
    d_hat_stage: np.ndarray     # per-stage predicted deficits, length T
    mean_share: float           # fraction of final-horizon variance in the mean error

    def __post_init__(self):
        d = np.asarray(self.d_hat_stage, dtype=float)
        if d.shape != (self.n_delivery_stages,):
            raise ValidationError("scenario: d_hat profile must have length T")
        if not 0.0 <= self.mean_share <= 1.0:
            raise ValidationError(f"mean_share must be in [0, 1], got {self.mean_share}")
        d.setflags(write=False)
        object.__setattr__(self, "d_hat_stage", d)

    @property
    def T(self) -> int:
        return self.n_delivery_stages

    @property
    def d_total(self) -> float:
        """Interval-total predicted deficit (the normalized D)."""
        return float(self.d_hat_stage.sum())

    @property
    def final_horizon_variance(self) -> float:
        """Total residual error variance at the last market's lead time."""
        return self.curve.variance_at(float(self.ladder.lead_times[-1]))

    @property
    def delivery_fluctuation_variance(self) -> float:
        """Interval-total variance of the intra-delivery fluctuation process."""
        return (1.0 - self.mean_share) * self.final_horizon_variance

    def delivery_forecast(self) -> ForecastModel:
        """Forecast model seen at the start of delivery: per-stage iid errors."""
        sigma_stage = math.sqrt(self.delivery_fluctuation_variance / self.T)
        return ForecastModel(self.T, self.d_hat_stage, np.full(self.T, sigma_stage))

    def inter_stage_stds(self) -> np.ndarray:
        """Std of the mean-forecast shift revealed after each market stage.

        Entry r (0-based) is the shift between stage r+1 and stage r+2; the
        last entry is the final mean revelation between the last market and
        delivery (the mean_share split of the residual variance).
        """
        R = self.ladder.n_stages
        out = np.empty(R)
        for r in range(R - 1):
            out[r] = math.sqrt(stage_error_variance(self.curve, r + 2, self.ladder))
        out[R - 1] = math.sqrt(self.mean_share * self.final_horizon_variance)
        return out

    def with_capacity(self, capacity: float) -> "Scenario":
        storage = StorageSpec(
            capacity,
            self.storage.storage_eff,
            self.storage.recharge_eff,
            self.storage.discharge_eff,
        )
        return Scenario(
            self.ladder, storage, self.cost, self.curve,
            self.n_delivery_stages, self.d_hat_stage, self.mean_share,
        )

    def with_d_total(self, d_total: float) -> "Scenario":
        """Same scenario at a different mean deficit (flat per-stage profile)."""
        d = np.full(self.T, float(d_total) / self.T)
        return Scenario(
            self.ladder, self.storage, self.cost, self.curve,
            self.n_delivery_stages, d, self.mean_share,
        )


def validate_ladder(ladder: MarketLadder, cost: CostModel | None = None) -> list[str]:
    """Check every pairwise price and lead-time constraint.

    Returns the list of violated constraints; an empty list means ok.
    Violations are data, not faults, so nothing raises here.
    """
    if ladder.n_stages == 0:
        raise ValueError("ladder must be nonempty")
    violations: list[str] = []
    stages = ladder.stages
    for s in stages:
        if s.direction not in (BUY, SELL):
            violations.append(f"stage {s.index}: direction must be 'buy' or 'sell'")
        if s.direction == BUY and s.price <= 0:
            violations.append(f"stage {s.index}: buy price must be positive, got {s.price}")
    for i, a in enumerate(stages):
        for b in stages[i + 1:]:
            if a.direction == BUY and b.direction == BUY and not a.price < b.price:
                violations.append(
                    f"stages {a.index}<{b.index}: buy prices must increase "
                    f"toward delivery ({a.price} !< {b.price})"
                )
            if a.direction == SELL and b.direction == SELL and not a.price > b.price:
                violations.append(
                    f"stages {a.index}<{b.index}: sell prices must decrease "
                    f"toward delivery ({a.price} !> {b.price})"
                )
            if a.direction == BUY and b.direction == SELL and not a.price > b.price:
                violations.append(
                    f"stages {a.index}<{b.index}: no-arbitrage requires buy price "
                    f"{a.price} > later sell price {b.price}"
                )
            if not a.lead_time_hours > b.lead_time_hours:
                violations.append(
                    f"stages {a.index}<{b.index}: lead times must strictly decrease"
                )
    if cost is not None:
        top = max(s.price for s in stages)
        if not cost.voll > top:
            violations.append(
                f"voll {cost.voll} must exceed the highest ladder price {top}; "
                "otherwise no threshold solves the stage equation"
            )
    return violations


def stage_error_variance(curve: ForecastErrorCurve, r: int, ladder: MarketLadder) -> float:
    """Variance of the forecast error explained between stages r-1 and r.

    r is 1-based; for r = 1 the predecessor horizon is the curve's largest
    tabulated horizon (the epoch at which the scenario forecast is quoted).
    Clamped at zero so roundoff never produces a negative variance.
    """
    if not 1 <= r <= ladder.n_stages:
        raise ValueError(f"stage index {r} outside 1..{ladder.n_stages}")
    t_cur = float(ladder.lead_times[r - 1])
    t_prev = curve.max_horizon if r == 1 else float(ladder.lead_times[r - 2])
    return max(curve.variance_at(t_prev) - curve.variance_at(t_cur), 0.0)


def load_curve(path: str | Path) -> ForecastErrorCurve:
    """Read a forecast error curve CSV with header ``horizon_hours,sigma``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            if "horizon_hours" not in fields or "sigma" not in fields:
                raise ParseError(
                    f"{path}: curve CSV must have columns horizon_hours,sigma; got {fields}"
                )
            rows = [(row["horizon_hours"], row["sigma"]) for row in reader]
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise ParseError(f"{path}: malformed curve row: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: curve CSV has no data rows")
    try:
        return ForecastErrorCurve.from_table(rows)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def scenario_from_dict(doc: dict, base_dir: str | Path = ".") -> Scenario:
    """Build and fully validate a Scenario from a parsed JSON document."""

    def need(key):
        if key not in doc:
            raise ParseError(f"scenario: missing required field '{key}'")
        return doc[key]

    ladder_rows = need("ladder")
    if not isinstance(ladder_rows, list) or not ladder_rows:
        raise ParseError("ladder: must be a nonempty list of stages")
    try:
        ladder = MarketLadder.from_rows(
            (row["lead_time_hours"], row["price"], row.get("direction", BUY))
            for row in ladder_rows
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"ladder: malformed stage entry: {exc}") from exc

    cost = CostModel(voll=float(need("voll")))

    st = need("storage")
    try:
        storage = StorageSpec(
            capacity=float(st["B"]),
            storage_eff=float(st.get("lambda", 1.0)),
            recharge_eff=float(st.get("mu", 1.0)),
            discharge_eff=float(st.get("nu", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"storage: malformed block: {exc}") from exc

    n_stages = int(need("T"))
    if n_stages < 1:
        raise ValidationError(f"T must be >= 1, got {n_stages}")

    d_hat = need("d_hat")
    if isinstance(d_hat, (int, float)):
        d_stage = np.full(n_stages, float(d_hat) / n_stages)
    else:
        d_stage = np.asarray(d_hat, dtype=float)
        if d_stage.shape != (n_stages,):
            raise ValidationError(f"d_hat: array must have length T={n_stages}")

    if "curve" in doc:
        curve = ForecastErrorCurve.from_table(doc["curve"])
    else:
        curve_path = Path(base_dir) / need("curve_file")
        curve = load_curve(curve_path)

    mean_share = float(doc.get("mean_share", 0.2))

    violations = validate_ladder(ladder, cost)
    for stage in ladder.stages:
        lt = stage.lead_time_hours
        if lt < curve.min_horizon or lt > curve.max_horizon:
            violations.append(
                f"stage {stage.index}: lead time {lt}h outside curve range "
                f"[{curve.min_horizon}, {curve.max_horizon}]"
            )
    if violations:
        raise ValidationError("scenario validation failed:\n  " + "\n  ".join(violations))

    return Scenario(
        ladder=ladder,
        storage=storage,
        cost=cost,
        curve=curve,
        n_delivery_stages=n_stages,
        d_hat_stage=d_stage,
        mean_share=mean_share,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load, parse and validate a scenario JSON file."""
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return scenario_from_dict(doc, base_dir=path.parent)
