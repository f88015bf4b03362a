"""Personalized charging cost: normalized time, price and distance terms."""

from __future__ import annotations

from dataclasses import dataclass

from .domain import EVChargeError, PreferenceWeights, SimParams, Station, Vehicle
from .mobility import TravelEstimate


class ZeroRequest(EVChargeError, ValueError):
    pass


@dataclass(frozen=True, slots=True)
class CostBreakdown:
    t_component: float
    p_component: float
    d_component: float
    aggregate: float

    @classmethod
    def combine(cls, weights: PreferenceWeights, t: float, p: float, d: float) -> CostBreakdown:
        agg = weights.alpha_time * t + weights.alpha_price * p + weights.alpha_dist * d
        return cls(t, p, d, agg)


def time_component(
    queued_energy_kwh: float, request_kwh: float, travel_time_s: float, params: SimParams
) -> float:
    """Normalized time to reach the station and clear its queue, own charge included."""
    total_s = (queued_energy_kwh + request_kwh) / params.charge_rate_kwh_per_s + travel_time_s
    return total_s / params.m_max_s


def price_eur(request_kwh: float, res_forecast_kwh: float, tariff: float) -> float:
    return tariff * max(request_kwh - res_forecast_kwh, 0.0)


def price_component(request_kwh: float, res_forecast_kwh: float) -> float:
    if request_kwh <= 0:
        raise ZeroRequest("price component undefined for a zero energy request")
    return max(request_kwh - res_forecast_kwh, 0.0) / request_kwh


def distance_component(dist: float, d_max: float) -> float:
    return dist / d_max


def charging_window(
    station: Station, request_kwh: float, travel_time_s: float, params: SimParams, now: float
) -> tuple[float, float]:
    """Expected (start, end) of charging if the vehicle commits now.

    Charging starts once the vehicle has arrived and the energy already
    queued ahead of it has been delivered.
    """
    start = now + max(travel_time_s, station.queued_energy_kwh / params.charge_rate_kwh_per_s)
    return start, start + request_kwh / params.charge_rate_kwh_per_s


def res_forecast(
    station: Station, request_kwh: float, travel_time_s: float, params: SimParams, now: float
) -> float:
    start, end = charging_window(station, request_kwh, travel_time_s, params, now)
    return station.renewable.energy_between(start, end)


def aggregate_cost(
    vehicle: Vehicle,
    station: Station,
    travel: TravelEstimate,
    params: SimParams,
    now: float = 0.0,
) -> CostBreakdown:
    m = vehicle.request.amount_kwh
    t = time_component(station.queued_energy_kwh, m, travel.travel_time_s, params)
    p = price_component(m, res_forecast(station, m, travel.travel_time_s, params, now))
    d = distance_component(travel.distance, params.d_max)
    return CostBreakdown.combine(vehicle.weights, t, p, d)
