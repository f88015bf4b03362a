"""Centralized argmin and decentralized green-signal station assignment.

In the decentralized protocol a vehicle broadcasts only its position,
preference weights and energy request.  Each station turns that broadcast
into a cost using nothing but its own state and then, at every protocol
step, emits a green signal with probability ``10 ** -cost``.  The vehicle
takes the first signal; simultaneous signals go to the nearest station.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .cost import CostBreakdown, distance_component, price_component, res_forecast, time_component
from .domain import EVChargeError, Position, PreferenceWeights, SimParams, Station, Vehicle

DEFAULT_STEP_LIMIT = 10_000


class NoStations(EVChargeError, ValueError):
    pass


class StepLimitExceeded(EVChargeError, RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class VehicleBroadcast:
    """Everything a station gets to know about a requesting vehicle."""

    vehicle_id: int
    position: Position
    request_kwh: float
    weights: PreferenceWeights

    @classmethod
    def from_vehicle(cls, v: Vehicle) -> VehicleBroadcast:
        return cls(v.id, v.position, v.request.amount_kwh, v.weights)


@dataclass(frozen=True, slots=True)
class StationOffer:
    station_id: int
    cost: CostBreakdown
    distance: float
    travel_time_s: float


@dataclass(frozen=True, slots=True)
class AssignmentOutcome:
    vehicle_id: int
    station_id: int
    wait_steps: int
    cost_at_assignment: CostBreakdown
    distance: float
    travel_time_s: float


StationEvaluator = Callable[[VehicleBroadcast, Station, object, SimParams, float], StationOffer]


def evaluate_station(
    broadcast: VehicleBroadcast, station: Station, arena, params: SimParams, now: float = 0.0
) -> StationOffer:
    """Cost of one station for one broadcast, computed from that station's state only."""
    travel = arena.estimate(broadcast.position, station.position)
    m = broadcast.request_kwh
    t = time_component(station.queued_energy_kwh, m, travel.travel_time_s, params)
    p = price_component(m, res_forecast(station, m, travel.travel_time_s, params, now))
    d = distance_component(travel.distance, params.d_max)
    return StationOffer(
        station.id,
        CostBreakdown.combine(broadcast.weights, t, p, d),
        travel.distance,
        travel.travel_time_s,
    )


def green_signal_probability(cost: CostBreakdown | float) -> float:
    f = cost.aggregate if isinstance(cost, CostBreakdown) else float(cost)
    if f < 0:
        raise ValueError("cost must be non-negative")
    return 10.0 ** (-f)


def _outcome(vehicle_id: int, offer: StationOffer, wait_steps: int) -> AssignmentOutcome:
    return AssignmentOutcome(
        vehicle_id, offer.station_id, wait_steps, offer.cost, offer.distance, offer.travel_time_s
    )


def centralized_assign(
    vehicle: Vehicle,
    stations: Sequence[Station],
    arena,
    params: SimParams,
    now: float = 0.0,
    evaluator: StationEvaluator = evaluate_station,
) -> AssignmentOutcome:
    """Deterministic argmin of the aggregate cost (ties: nearer, then lower id)."""
    if not stations:
        raise NoStations("no charging stations available")
    b = VehicleBroadcast.from_vehicle(vehicle)
    offers = [evaluator(b, s, arena, params, now) for s in stations]
    best = min(offers, key=lambda o: (o.cost.aggregate, o.distance, o.station_id))
    return _outcome(vehicle.id, best, 0)


def decentralized_assign(
    vehicle: Vehicle,
    stations: Sequence[Station],
    arena,
    params: SimParams,
    rng: np.random.Generator,
    now: float = 0.0,
    step_limit: int = DEFAULT_STEP_LIMIT,
    evaluator: StationEvaluator = evaluate_station,
) -> AssignmentOutcome:
    """Run the green-signal protocol until the vehicle is assigned.

    Offers are computed once, before the signalling loop.  ``wait_steps``
    counts the protocol steps that passed without any signal.
    """
    if not stations:
        raise NoStations("no charging stations available")
    b = VehicleBroadcast.from_vehicle(vehicle)
    offers = [evaluator(b, s, arena, params, now) for s in stations]
    p = np.array([green_signal_probability(o.cost) for o in offers])
    n = len(offers)
    for step in range(step_limit):
        fired = np.flatnonzero(rng.random(n) < p)
        if fired.size:
            if fired.size == 1:
                chosen = offers[fired[0]]
            else:
                chosen = min((offers[i] for i in fired), key=lambda o: (o.distance, o.station_id))
            return _outcome(vehicle.id, chosen, step)
    raise StepLimitExceeded(f"vehicle {vehicle.id}: no green signal after {step_limit} steps")
