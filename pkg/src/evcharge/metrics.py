"""Performance indices and experiment summaries computed from run results.

Every index accepts either a single ``RunResult`` or a sequence of them.
Per-vehicle indices are averaged within a run first and then across runs,
so each Monte Carlo run carries the same weight.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig, with_overrides
from .domain import EVChargeError, weight_grid
from .engine import RunResult, run_monte_carlo


class EmptyRun(EVChargeError, ValueError):
    pass


class ZeroEnergy(EVChargeError, ValueError):
    pass


def _runs(results: RunResult | Sequence[RunResult]) -> list[RunResult]:
    if isinstance(results, RunResult):
        return [results]
    runs = list(results)
    if not runs:
        raise EmptyRun("no runs given")
    return runs


def charging_times_min(run: RunResult) -> np.ndarray:
    """Spawn-to-charge-end time of every completed vehicle, in minutes."""
    return np.array([(v.charge_end - v.spawn) / 60.0 for v in run.completed])


def index_charging_time(results: RunResult | Sequence[RunResult]) -> float:
    """Mean time from request to full charge (minutes) over charged vehicles.

    Vehicles still travelling or queued at the horizon are left out.
    """
    means = []
    for run in _runs(results):
        times = charging_times_min(run)
        if times.size == 0:
            raise EmptyRun(f"run with seed {run.seed} has no completed vehicle")
        means.append(times.mean())
    return float(np.mean(means))


def index_energy_price(results: RunResult | Sequence[RunResult]) -> float:
    """Energy-weighted grid price per charged kWh (EUR/kWh).

    Energy covered by local renewables is free, so a station without
    renewables contributes exactly its tariff.
    """
    paid = 0.0
    energy = 0.0
    for run in _runs(results):
        for v in run.completed:
            paid += v.price_eur
            energy += v.energy_kwh
    if energy <= 0.0:
        raise ZeroEnergy("no energy was charged")
    return paid / energy


def index_distance(results: RunResult | Sequence[RunResult]) -> float:
    """Mean distance between a vehicle and its assigned station at assignment time."""
    means = []
    for run in _runs(results):
        if not run.vehicles:
            raise EmptyRun(f"run with seed {run.seed} has no vehicle")
        means.append(np.mean([v.distance for v in run.vehicles]))
    return float(np.mean(means))


def participation_factors(results: RunResult | Sequence[RunResult]) -> dict[int, float]:
    """Share of all assignments captured by each station (pooled over runs)."""
    runs = _runs(results)
    counts = {sid: 0 for sid in runs[0].station_ids}
    for run in runs:
        for v in run.vehicles:
            counts[v.assigned] += 1
    total = sum(counts.values())
    if total == 0:
        raise EmptyRun("no assignments recorded")
    return {sid: c / total for sid, c in counts.items()}


def participation_entropy(factors: dict[int, float]) -> float:
    """Shannon entropy (nats) of the participation distribution."""
    return float(-sum(p * math.log(p) for p in factors.values() if p > 0))


def mean_wait_steps(results: RunResult | Sequence[RunResult]) -> float:
    """Mean number of protocol steps before the first green signal, pooled over assignments."""
    waits = [v.wait_steps for run in _runs(results) for v in run.vehicles]
    if not waits:
        raise EmptyRun("no assignments recorded")
    return float(np.mean(waits))


def system_charging_time_series(run: RunResult) -> np.ndarray:
    """Per-sample mean over all stations (empty ones too) of queued energy / e_r, in minutes."""
    return run.queued_kwh.mean(axis=1) / run.charge_rate_kwh_per_s / 60.0


def heat_map_rows(results: RunResult | Sequence[RunResult]) -> list[tuple[int, float, float, float]]:
    """(station id, x, y, participation) rows for plotting."""
    runs = _runs(results)
    pf = participation_factors(runs)
    return [(sid, x, y, pf[sid]) for sid, (x, y) in zip(runs[0].station_ids, runs[0].station_positions)]


@dataclass(frozen=True, slots=True)
class SolverComparison:
    sample_times: np.ndarray
    centralized_series: np.ndarray
    decentralized_series: np.ndarray
    rmse_min: float
    centralized_ict: float
    decentralized_ict: float
    mean_wait_steps: float
    n_assignments: int

    @property
    def ratio(self) -> float:
        return self.decentralized_ict / self.centralized_ict


def _mean_series(runs: Iterable[RunResult]) -> np.ndarray:
    return np.mean([system_charging_time_series(r) for r in runs], axis=0)


def compare_solvers(
    cfg: ScenarioConfig, n_runs: int | None = None, seed: int | None = None, workers: int = 1
) -> SolverComparison:
    """Run one scenario under both solvers with identical run seeds."""
    cent = run_monte_carlo(with_overrides(cfg, {"solver.kind": "centralized"}), n_runs, seed, workers)
    dec = run_monte_carlo(with_overrides(cfg, {"solver.kind": "decentralized"}), n_runs, seed, workers)
    cs, ds = _mean_series(cent), _mean_series(dec)
    return SolverComparison(
        sample_times=cent[0].sample_times,
        centralized_series=cs,
        decentralized_series=ds,
        rmse_min=float(np.sqrt(np.mean((cs - ds) ** 2))),
        centralized_ict=index_charging_time(cent),
        decentralized_ict=index_charging_time(dec),
        mean_wait_steps=mean_wait_steps(dec),
        n_assignments=sum(len(r.vehicles) for r in dec),
    )


@dataclass(frozen=True, slots=True)
class SweepRow:
    alpha_time: float
    alpha_price: float
    alpha_dist: float
    i_ct: float
    i_ep: float
    i_d: float


def weight_sweep(
    cfg: ScenarioConfig,
    step: float | None = None,
    n_runs: int | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """Evaluate (i_ct, i_ep, i_d) at every convex weight tuple on the grid."""
    step = cfg.weights.sweep_step if step is None else step
    rows = []
    for w in weight_grid(step):
        c = with_overrides(cfg, {"weights.mode": "fixed", "weights.fixed": list(w.as_tuple())})
        runs = run_monte_carlo(c, n_runs, seed, workers)
        rows.append(
            SweepRow(*w.as_tuple(), index_charging_time(runs), index_energy_price(runs), index_distance(runs))
        )
    return rows


@dataclass(frozen=True, slots=True)
class CurvePoint:
    q: float
    i_ct: float
    stderr: float
    n_runs: int


DEFAULT_Q_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def compliance_curve(
    cfg: ScenarioConfig,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    n_runs: int | None = None,
    seed: int | None = None,
    workers: int = 1,
) -> list[CurvePoint]:
    """Monte Carlo mean charging time (with standard error) at each fixed compliance level."""
    out = []
    for q in q_grid:
        c = with_overrides(cfg, {"compliance.mode": "fixed", "compliance.q": float(q)})
        runs = run_monte_carlo(c, n_runs, seed, workers)
        per_run = np.array([index_charging_time(r) for r in runs])
        se = float(per_run.std(ddof=1) / math.sqrt(len(per_run))) if len(per_run) > 1 else 0.0
        out.append(CurvePoint(float(q), float(per_run.mean()), se, len(per_run)))
    return out
