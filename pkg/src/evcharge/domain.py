"""Core value types shared across the simulator.

Every quantity that enters the cost function lives here: station and
vehicle positions, preference weights, energy requests, renewable
profiles and the global simulation parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

WEIGHT_TOLERANCE = 1e-9

#: Charge delivered in one 1 s step at 22 kW.
DEFAULT_CHARGE_RATE = 0.0061
DEFAULT_M_MAX_S = 3600.0
DEFAULT_ARRIVAL_RATE = 500.0 / (7 * 3600)
DEFAULT_HORIZON_S = 7 * 3600
DEFAULT_MAX_REQUEST_KWH = 8.0


class EVChargeError(Exception):
    """Base class for all errors raised by this package."""


class NonConvexWeights(EVChargeError, ValueError):
    pass


class InvalidPosition(EVChargeError, ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Position:
    """A point in the arena.

    In road-graph mode ``node`` names the graph vertex the point sits on;
    ``x``/``y`` then carry the vertex coordinates for display only.
    """

    x: float
    y: float
    node: str | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidPosition(f"non-finite coordinates ({self.x}, {self.y})")

    def in_unit_square(self) -> bool:
        return 0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0


@dataclass(frozen=True, slots=True)
class PreferenceWeights:
    """Convex weights on the time, price and distance cost components."""

    alpha_time: float
    alpha_price: float
    alpha_dist: float

    def __post_init__(self) -> None:
        w = (self.alpha_time, self.alpha_price, self.alpha_dist)
        if any(not math.isfinite(a) or a < 0 for a in w):
            raise NonConvexWeights(f"weights must be non-negative, got {w}")
        if abs(sum(w) - 1.0) > WEIGHT_TOLERANCE:
            raise NonConvexWeights(f"weights must sum to 1, got {w} (sum {sum(w)!r})")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha_time, self.alpha_price, self.alpha_dist)

    @classmethod
    def of(cls, w) -> PreferenceWeights:
        a, b, c = (float(v) for v in w)
        return cls(a, b, c)


def validate_weights(w: PreferenceWeights | tuple[float, float, float]) -> PreferenceWeights:
    """Return ``w`` as validated weights; raise NonConvexWeights otherwise."""
    if isinstance(w, PreferenceWeights):
        # frozen instances were already checked at construction
        return w
    return PreferenceWeights.of(w)


def weight_grid(step: float = 0.1) -> list[PreferenceWeights]:
    """All convex 3-tuples on a regular grid (66 points for step 0.1)."""
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-12:
        raise ValueError(f"grid step must divide 1, got {step}")
    grid = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = n - i - j
            grid.append(PreferenceWeights(i / n, j / n, k / n))
    return grid


@dataclass(frozen=True, slots=True)
class EnergyRequest:
    amount_kwh: float
    max_request_kwh: float = DEFAULT_MAX_REQUEST_KWH

    def __post_init__(self) -> None:
        if not (0.0 < self.amount_kwh <= self.max_request_kwh):
            raise ValueError(
                f"energy request {self.amount_kwh} kWh outside (0, {self.max_request_kwh}]"
            )


def sample_energy_request(
    rng: np.random.Generator,
    mean_kwh: float = 5.0,
    std_kwh: float = 1.2,
    min_kwh: float = 1.0,
    max_kwh: float = DEFAULT_MAX_REQUEST_KWH,
) -> EnergyRequest:
    """Gaussian energy request truncated to ``[min_kwh, max_kwh]`` by resampling."""
    if not (min_kwh > 0 and max_kwh > min_kwh):
        raise ValueError("need 0 < min_kwh < max_kwh")
    if std_kwh == 0:
        value = min(max(mean_kwh, min_kwh), max_kwh)
        return EnergyRequest(value, max_kwh)
    while True:
        value = float(rng.normal(mean_kwh, std_kwh))
        if min_kwh <= value <= max_kwh:
            return EnergyRequest(value, max_kwh)


@dataclass(frozen=True, slots=True)
class Vehicle:
    id: int
    position: Position
    request: EnergyRequest
    weights: PreferenceWeights
    spawn_time: float
    compliant_draw: bool = True


class RenewableKind(str, Enum):
    NONE = "none"
    PV = "pv"
    WIND = "wind"


@dataclass(frozen=True, eq=False)
class RenewableProfile:
    """Per-second renewable power available at a station.

    ``power_kw[t]`` is the mean power during second ``t``; beyond the end of
    the array generation is zero.  ``energy_between`` integrates it exactly
    (piecewise constant), which is what the price forecast uses.
    """

    kind: RenewableKind
    nominal_power_kw: float
    power_kw: np.ndarray = field(repr=False)
    _cum_kwh: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.nominal_power_kw < 0:
            raise ValueError("nominal_power_kw must be >= 0")
        power = np.asarray(self.power_kw, dtype=float)
        if self.kind is RenewableKind.NONE and np.any(power != 0):
            raise ValueError("a station without renewables must generate nothing")
        if np.any(power < 0):
            raise ValueError("renewable power must be non-negative")
        power.setflags(write=False)
        object.__setattr__(self, "power_kw", power)
        cum = np.concatenate(([0.0], np.cumsum(power) / 3600.0))
        cum.setflags(write=False)
        object.__setattr__(self, "_cum_kwh", cum)

    @classmethod
    def none(cls, length_s: int = 0) -> RenewableProfile:
        return cls(RenewableKind.NONE, 0.0, np.zeros(length_s))

    def _cum_at(self, t: float) -> float:
        n = len(self.power_kw)
        if t <= 0:
            return 0.0
        if t >= n:
            return float(self._cum_kwh[-1])
        i = int(t)
        return float(self._cum_kwh[i] + (t - i) * self.power_kw[i] / 3600.0)

    def energy_between(self, start_s: float, end_s: float) -> float:
        """Renewable energy (kWh) generated in ``[start_s, end_s]``."""
        if end_s <= start_s:
            return 0.0
        return self._cum_at(end_s) - self._cum_at(start_s)

    def power_at(self, t: float) -> float:
        i = int(t)
        if 0 <= i < len(self.power_kw):
            return float(self.power_kw[i])
        return 0.0

    def total_kwh(self, until_s: float | None = None) -> float:
        if until_s is None:
            return float(self._cum_kwh[-1])
        return self._cum_at(until_s)


@dataclass(frozen=True, slots=True)
class Station:
    """Snapshot of a charging point.

    ``queued_energy_kwh`` is the committed energy at the moment the snapshot
    was taken; the engine owns the live value.
    """

    id: int
    position: Position
    renewable: RenewableProfile
    tariff_eur_per_kwh: float = 0.45
    queued_energy_kwh: float = 0.0
    account_id: str = ""

    def __post_init__(self) -> None:
        if self.queued_energy_kwh < -1e-9:
            raise ValueError(f"station {self.id}: negative queued energy")
        if self.tariff_eur_per_kwh <= 0:
            raise ValueError(f"station {self.id}: tariff must be positive")


@dataclass(frozen=True, slots=True)
class SimParams:
    charge_rate_kwh_per_s: float = DEFAULT_CHARGE_RATE
    m_max_s: float = DEFAULT_M_MAX_S
    d_max: float = math.sqrt(2.0)
    vehicle_speed: float = 0.02
    arrival_rate_per_s: float = DEFAULT_ARRIVAL_RATE
    horizon_s: float = DEFAULT_HORIZON_S

    def __post_init__(self) -> None:
        for name in (
            "charge_rate_kwh_per_s",
            "m_max_s",
            "d_max",
            "vehicle_speed",
            "horizon_s",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"SimParams.{name} must be > 0")
        # a zero arrival rate is allowed for drained-world tests
        if self.arrival_rate_per_s < 0:
            raise ValueError("SimParams.arrival_rate_per_s must be >= 0")
