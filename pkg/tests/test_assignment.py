from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evcharge.assignment import (
    NoStations,
    StationOffer,
    StepLimitExceeded,
    VehicleBroadcast,
    centralized_assign,
    decentralized_assign,
    evaluate_station,
    green_signal_probability,
)
from evcharge.cost import CostBreakdown
from evcharge.domain import (
    EnergyRequest,
    Position,
    PreferenceWeights,
    RenewableProfile,
    SimParams,
    Station,
    Vehicle,
)
from evcharge.mobility import UnitSquareArena

P = SimParams()
ARENA = UnitSquareArena()


def _vehicle(w=(1, 0, 0), m=5.0, pos=(0.0, 0.0)):
    return Vehicle(0, Position(*pos), EnergyRequest(m), PreferenceWeights.of(w), 0.0)


def _station(i, x, y=0.0, queued=0.0):
    return Station(i, Position(x, y), RenewableProfile.none(1000), queued_energy_kwh=queued)


class FixedCosts:
    """Test double: a station evaluator returning preset costs.

    It records what it was handed so the tests can check that each
    evaluation sees one broadcast and one station, nothing more.
    """

    def __init__(self, costs: dict[int, float]):
        self.costs = costs
        self.calls = []

    def __call__(self, broadcast, station, arena, params, now):
        self.calls.append((broadcast, station))
        assert isinstance(broadcast, VehicleBroadcast)
        assert isinstance(station, Station)
        d = abs(station.position.x - broadcast.position.x)
        f = self.costs[station.id]
        return StationOffer(station.id, CostBreakdown(f, 0.0, 0.0, f), d, d / params.vehicle_speed)


def race_oracle(costs: list[float], distances: list[float]) -> list[float]:
    """Exact probability that each station wins the first-signal race."""
    p = [10.0 ** -f for f in costs]
    n = len(p)
    win = [0.0] * n
    for fired in itertools.product([0, 1], repeat=n):
        if not any(fired):
            continue
        prob = math.prod(p[i] if fired[i] else 1 - p[i] for i in range(n))
        winner = min((i for i in range(n) if fired[i]), key=lambda i: (distances[i], i))
        win[winner] += prob
    total = 1 - math.prod(1 - x for x in p)
    return [w / total for w in win]


def test_green_signal_probability_examples():
    assert green_signal_probability(0.0) == 1.0
    assert green_signal_probability(1.0) == pytest.approx(0.1)
    assert green_signal_probability(0.5) == pytest.approx(0.3162, abs=1e-4)
    with pytest.raises(ValueError):
        green_signal_probability(-0.1)


def test_centralized_single_station():
    out = centralized_assign(_vehicle(), [_station(0, 0.5)], ARENA, P)
    assert out.station_id == 0 and out.wait_steps == 0


def test_centralized_distance_only_picks_nearest():
    stations = [_station(0, 0.9), _station(1, 0.2), _station(2, 0.5)]
    assert centralized_assign(_vehicle((0, 0, 1)), stations, ARENA, P).station_id == 1


def test_centralized_time_only_hand_example():
    # A: 10 kWh queued, 100 s away; B: 4 kWh queued, 600 s away
    a = _station(0, 100 * P.vehicle_speed, queued=10.0)
    b = _station(1, 600 * P.vehicle_speed, queued=4.0)
    out = centralized_assign(_vehicle(), [a, b], ARENA, P)
    assert (15 / P.charge_rate_kwh_per_s + 100) > (9 / P.charge_rate_kwh_per_s + 600)
    assert out.station_id == 1
    assert out.cost_at_assignment.aggregate == pytest.approx((9 / P.charge_rate_kwh_per_s + 600) / P.m_max_s)


def test_centralized_ties_break_by_distance_then_id():
    ev = FixedCosts({0: 0.3, 1: 0.3, 2: 0.3, 3: 0.9})
    stations = [_station(0, 0.5), _station(1, 0.2), _station(2, 0.2), _station(3, 0.0)]
    for _ in range(5):
        assert centralized_assign(_vehicle(), stations, ARENA, P, evaluator=ev).station_id == 1
    # permuting the input does not change the winner
    assert centralized_assign(_vehicle(), stations[::-1], ARENA, P, evaluator=ev).station_id == 1


def test_no_stations():
    with pytest.raises(NoStations):
        centralized_assign(_vehicle(), [], ARENA, P)
    with pytest.raises(NoStations):
        decentralized_assign(_vehicle(), [], ARENA, P, np.random.default_rng(0))


def test_decentralized_zero_cost_is_immediate():
    ev = FixedCosts({0: 0.0})
    out = decentralized_assign(_vehicle(), [_station(0, 0.3)], ARENA, P, np.random.default_rng(0), evaluator=ev)
    assert out.station_id == 0 and out.wait_steps == 0


@pytest.mark.parametrize(
    "costs,xs",
    [
        ([0.1, 1.0], [0.5, 0.2]),
        ([0.1, 1.0], [0.2, 0.5]),
        ([0.3, 0.3], [0.4, 0.1]),
        ([0.2, 0.6, 1.0], [0.3, 0.1, 0.2]),
        ([0.0, 0.5, 0.5], [0.9, 0.1, 0.2]),
    ],
)
def test_decentralized_winner_frequencies_match_race_oracle(costs, xs):
    n = len(costs)
    ev = FixedCosts(dict(enumerate(costs)))
    stations = [_station(i, x) for i, x in enumerate(xs)]
    rng = np.random.default_rng(77)
    trials = 10_000
    counts = np.zeros(n)
    for _ in range(trials):
        counts[decentralized_assign(_vehicle(), stations, ARENA, P, rng, evaluator=ev).station_id] += 1
    expected = race_oracle(costs, xs)
    assert np.max(np.abs(counts / trials - expected)) <= 0.02


def test_race_oracle_two_station_closed_form():
    pa, pb = 10**-0.1, 10**-1.0
    # A nearer: A wins whenever it fires
    expected = pa / (1 - (1 - pa) * (1 - pb))
    assert race_oracle([0.1, 1.0], [0.1, 0.2])[0] == pytest.approx(expected)


def test_mean_wait_with_twelve_unit_costs_is_short():
    ev = FixedCosts({i: 1.0 for i in range(12)})
    stations = [_station(i, i / 12) for i in range(12)]
    rng = np.random.default_rng(5)
    waits = [decentralized_assign(_vehicle(), stations, ARENA, P, rng, evaluator=ev).wait_steps for _ in range(10_000)]
    q = 0.9**12
    assert np.mean(waits) <= 2.0
    assert np.mean(waits) == pytest.approx(q / (1 - q), rel=0.1)


def test_step_limit():
    ev = FixedCosts({0: 50.0})
    with pytest.raises(StepLimitExceeded):
        decentralized_assign(_vehicle(), [_station(0, 0.1)], ARENA, P, np.random.default_rng(0), step_limit=20, evaluator=ev)


def test_decentralized_reproducible():
    stations = [_station(i, i / 5, queued=float(i)) for i in range(5)]
    a = [decentralized_assign(_vehicle(), stations, ARENA, P, np.random.default_rng(3)) for _ in range(3)]
    b = [decentralized_assign(_vehicle(), stations, ARENA, P, np.random.default_rng(3)) for _ in range(3)]
    assert a == b


def test_information_locality():
    ev = FixedCosts({0: 0.2, 1: 0.4, 2: 0.6})
    stations = [_station(i, 0.1 * (i + 1), queued=float(i)) for i in range(3)]
    decentralized_assign(_vehicle(), stations, ARENA, P, np.random.default_rng(0), evaluator=ev)
    assert len(ev.calls) == 3
    for (b, s), own in zip(ev.calls, stations):
        assert s is own
        assert set(b.__slots__) == {"vehicle_id", "position", "request_kwh", "weights"}


def test_lower_cost_is_chosen_more_often():
    rng = np.random.default_rng(11)
    stations = [_station(0, 0.5), _station(1, 0.5)]
    freq = []
    for f in (0.2, 0.5, 0.8):
        ev = FixedCosts({0: f, 1: 0.5})
        wins = sum(decentralized_assign(_vehicle(), stations, ARENA, P, rng, evaluator=ev).station_id == 0 for _ in range(4000))
        freq.append(wins / 4000)
    assert freq[0] > freq[1] > freq[2]


def test_evaluate_station_uses_own_state():
    b = VehicleBroadcast(0, Position(0, 0), 5.0, PreferenceWeights(1, 0, 0))
    offer = evaluate_station(b, _station(0, 0.3, queued=2.0), ARENA, P)
    assert offer.cost.aggregate == pytest.approx((7 / P.charge_rate_kwh_per_s + 0.3 / P.vehicle_speed) / P.m_max_s)


@given(st.integers(0, 2), st.floats(0.1, 10), st.integers(0, 2**31))
def test_single_component_winner_invariant_to_normalization(k, scale, seed):
    rng = np.random.default_rng(seed)
    w = [0.0, 0.0, 0.0]
    w[k] = 1.0
    v = _vehicle(tuple(w), pos=(float(rng.random()), float(rng.random())))
    stations = [
        Station(
            i, Position(float(rng.random()), float(rng.random())), RenewableProfile.none(100),
            tariff_eur_per_kwh=0.45, queued_energy_kwh=float(rng.uniform(0, 20)),
        )
        for i in range(5)
    ]  # fmt: skip
    from dataclasses import replace

    scaled = replace(P, m_max_s=P.m_max_s * scale, d_max=P.d_max * scale)
    rescaled = [replace(s, tariff_eur_per_kwh=s.tariff_eur_per_kwh * scale) for s in stations]
    assert centralized_assign(v, stations, ARENA, P).station_id == centralized_assign(v, rescaled, ARENA, scaled).station_id
