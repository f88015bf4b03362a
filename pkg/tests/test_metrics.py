from __future__ import annotations

import math

import numpy as np
import pytest

from evcharge.config import from_dict
from evcharge.engine import RunResult, VehicleRecord, run_monte_carlo, run_scenario
from evcharge.metrics import (
    EmptyRun,
    ZeroEnergy,
    compare_solvers,
    compliance_curve,
    heat_map_rows,
    index_charging_time,
    index_distance,
    index_energy_price,
    mean_wait_steps,
    participation_entropy,
    participation_factors,
    system_charging_time_series,
    weight_sweep,
)


def _veh(i, station=0, energy=5.0, res=0.0, spawn=0.0, end=600.0, dist=0.1, tariff=0.45):
    return VehicleRecord(
        vehicle_id=i, spawn=spawn, x=0.0, y=0.0, node=None, request_kwh=energy, weights=(1.0, 0.0, 0.0),
        assigned=station, station=station, defected=False, wait_steps=i % 3, cost=0.0, distance=dist,
        travel_time_s=0.0, arrival=None if end is None else spawn, charge_start=None if end is None else spawn,
        charge_end=end, energy_kwh=energy, res_kwh=res, price_eur=tariff * (energy - res),
    )  # fmt: skip


def _run(vehicles, n_stations=3, seed=0, queued=None):
    queued = np.zeros((2, n_stations)) if queued is None else queued
    return RunResult(
        seed=seed, solver="centralized", vehicles=vehicles, station_ids=list(range(n_stations)),
        station_positions=[(i / n_stations, 0.5) for i in range(n_stations)], station_kinds=["none"] * n_stations,
        tariffs=[0.45] * n_stations, generated_kwh=[0.0] * n_stations, sample_times=np.arange(len(queued)) * 60,
        queue_length=np.zeros(queued.shape, dtype=int), queued_kwh=queued, renewable_kw=np.zeros(queued.shape),
        charge_rate_kwh_per_s=0.0061,
    )  # fmt: skip


def test_single_vehicle_charging_time_matches_pure_charging():
    cfg = from_dict({
        "stations": {"count": 1, "placement": "explicit", "positions": [[0.5, 0.5]], "renewables": ["none"]},
        "sim": {"arrival_rate_per_s": 0.0, "horizon_s": 3000},
    })  # fmt: skip
    from evcharge.engine import Trip, WorldState, build_params, build_stations, build_arena, step
    from evcharge.domain import EnergyRequest, Position, PreferenceWeights, Vehicle

    stations = build_stations(cfg, build_arena(cfg), np.random.default_rng(0))
    w = WorldState(stations, build_params(cfg))
    v = Vehicle(0, Position(0.5, 0.5), EnergyRequest(5.0), PreferenceWeights(1, 0, 0), 0.0)
    t = Trip(v, 0, 0, 0, 0.0, 0.0, 0.0, 0.0, math.inf, 5.0)
    w.commit(t)
    while t.charge_end is None:
        step(w)
    minutes = (t.charge_end - 0.0) / 60
    assert minutes == pytest.approx(5 / 0.0061 / 60, abs=1 / 60)
    assert minutes == pytest.approx(13.7, abs=0.1)


def test_charging_time_averages_runs_then_vehicles():
    r1 = _run([_veh(0, end=600.0), _veh(1, end=1200.0)])
    r2 = _run([_veh(0, end=60.0)])
    assert index_charging_time(r1) == pytest.approx(15.0)
    assert index_charging_time([r1, r2]) == pytest.approx((15.0 + 1.0) / 2)


def test_incomplete_vehicles_are_excluded():
    r = _run([_veh(0, end=600.0), _veh(1, end=None, energy=2.0)])
    assert index_charging_time(r) == pytest.approx(10.0)


def test_empty_run():
    with pytest.raises(EmptyRun):
        index_charging_time(_run([_veh(0, end=None)]))
    with pytest.raises(EmptyRun):
        index_charging_time([])
    with pytest.raises(EmptyRun):
        participation_factors(_run([]))


def test_energy_price_examples():
    assert index_energy_price(_run([_veh(0), _veh(1)])) == pytest.approx(0.45)
    assert index_energy_price(_run([_veh(0, res=5.0)])) == 0.0
    # 100 kWh charged, 40 from renewables
    r = _run([_veh(0, energy=50.0, res=20.0), _veh(1, energy=50.0, res=20.0)])
    assert index_energy_price(r) == pytest.approx(0.27)


def test_zero_energy():
    with pytest.raises(ZeroEnergy):
        index_energy_price(_run([_veh(0, end=None)]))


def test_distance_index():
    assert index_distance(_run([_veh(0, dist=0.2), _veh(1, dist=0.4)])) == pytest.approx(0.3)


def test_participation_examples():
    pf = participation_factors(_run([_veh(i, station=1) for i in range(5)]))
    assert pf == {0: 0.0, 1: 1.0, 2: 0.0}
    pf = participation_factors(_run([_veh(i, station=i % 12) for i in range(1200)], n_stations=12))
    assert all(p == pytest.approx(1 / 12) for p in pf.values())
    assert participation_entropy(pf) == pytest.approx(math.log(12))
    assert participation_entropy({0: 1.0, 1: 0.0}) == 0.0


def test_heat_map_rows():
    rows = heat_map_rows(_run([_veh(0, station=2)]))
    assert rows[2] == (2, 2 / 3, 0.5, 1.0)


def test_mean_wait_steps():
    assert mean_wait_steps(_run([_veh(i) for i in range(3)])) == pytest.approx(1.0)


def test_series_includes_empty_stations():
    q = np.array([[0.61, 0.0], [1.22, 0.0]])
    s = system_charging_time_series(_run([_veh(0)], n_stations=2, queued=q))
    assert s == pytest.approx([0.61 / 0.0061 / 60 / 2, 1.22 / 0.0061 / 60 / 2])


def test_simulated_indices_are_in_range(short_cfg):
    runs = run_monte_carlo(short_cfg, 2, 0)
    assert 0.0 <= index_energy_price(runs) <= 0.45
    assert sum(participation_factors(runs).values()) == pytest.approx(1.0, abs=1e-9)
    assert index_charging_time(runs) > 0


def test_no_renewables_price_is_tariff():
    cfg = from_dict({"stations": {"renewables": ["none"] * 12}, "sim": {"horizon_s": 3600}})
    assert index_energy_price(run_scenario(cfg, 0)) == pytest.approx(0.45)


def test_compare_solvers_shares_arrivals(short_cfg):
    rep = compare_solvers(short_cfg, 2, 0)
    assert rep.centralized_series.shape == rep.decentralized_series.shape
    assert rep.rmse_min >= 0
    assert rep.ratio == pytest.approx(rep.decentralized_ict / rep.centralized_ict)
    same = compare_solvers(short_cfg, 2, 0)
    assert same.rmse_min == rep.rmse_min


def test_weight_sweep_has_66_rows():
    cfg = from_dict({"sim": {"horizon_s": 2400}})
    rows = weight_sweep(cfg, 0.1, 1, 0)
    assert len(rows) == 66
    assert {(r.alpha_time, r.alpha_price, r.alpha_dist) for r in rows} >= {(1.0, 0.0, 0.0), (0.0, 0.0, 1.0)}
    assert all(0 <= r.i_ep <= 0.45 for r in rows)


def test_compliance_curve_shape(short_cfg):
    pts = compliance_curve(short_cfg, (0.0, 1.0), 2, 0)
    assert [p.q for p in pts] == [0.0, 1.0]
    assert all(p.n_runs == 2 and p.stderr >= 0 for p in pts)


@pytest.mark.slow
def test_extreme_corners_dominate_the_sweep():
    rows = weight_sweep(from_dict({}), 0.1, 2, 0)
    best_time = min(rows, key=lambda r: r.i_ct)
    best_dist = min(rows, key=lambda r: r.i_d)
    assert (best_time.alpha_time, best_time.alpha_price, best_time.alpha_dist) == (1.0, 0.0, 0.0)
    assert (best_dist.alpha_time, best_dist.alpha_price, best_dist.alpha_dist) == (0.0, 0.0, 1.0)
