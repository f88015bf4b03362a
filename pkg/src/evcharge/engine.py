"""Time-stepped world simulation.

Every simulated second: Poisson spawns are assigned to a station, their
energy is committed to that station's queue, they travel (teleporting
after the travel time), join the physical FIFO queue and are charged
``e_r`` kWh per second by the single plug.  Defecting drivers leave a
phantom commitment at the station they accepted until their bond
deadline, and join their nearest station's queue on arrival.
"""

from __future__ import annotations

import heapq
from collections import deque
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import AssignmentOutcome, centralized_assign, decentralized_assign
from .compliance import (
    ComplianceModel,
    ControllerState,
    TraceRow,
    compliance_response,
    controller_step,
    estimate_compliance,
    resolve_compliance,
)
from .config import (
    STREAM_ARRIVALS,
    STREAM_ASSIGNMENT,
    STREAM_COMPLIANCE,
    STREAM_LEDGER,
    STREAM_RENEWABLES,
    ConfigError,
    ScenarioConfig,
    stream,
)
from .cost import res_forecast
from .domain import (
    EVChargeError,
    Position,
    PreferenceWeights,
    RenewableKind,
    RenewableProfile,
    SimParams,
    Station,
    Vehicle,
    sample_energy_request,
)
from .ledger import InsufficientBalance, Ledger
from .mobility import RoadGraphArena, UnitSquareArena, load_road_graph

DONE_EPS = 1e-9


class InvariantViolation(EVChargeError, AssertionError):
    pass


# -- renewable generation ---------------------------------------------------


def pv_profile(length_s: int, nominal_kw: float, daylight_start_s: float, daylight_end_s: float) -> np.ndarray:
    """Half-sine PV output over the daylight window, zero outside it."""
    t = np.arange(length_s) + 0.5
    span = daylight_end_s - daylight_start_s
    phase = (t - daylight_start_s) / span
    out = nominal_kw * np.sin(np.pi * phase)
    out[(phase <= 0) | (phase >= 1)] = 0.0
    return out


def wind_profile(rng: np.random.Generator, length_s: int, nominal_kw: float, volatility: float) -> np.ndarray:
    """Reflected random walk of the capacity factor in [0, 1], scaled to nominal power."""
    start = rng.random()
    walk = start + np.cumsum(rng.normal(0.0, volatility, length_s))
    # fold onto [0, 1]: reflecting boundaries
    folded = np.mod(walk, 2.0)
    folded = np.where(folded > 1.0, 2.0 - folded, folded)
    return nominal_kw * folded


# -- scenario construction ----------------------------------------------------


def build_arena(cfg: ScenarioConfig):
    if cfg.arena.mode == "unit_square":
        return UnitSquareArena(cfg.sim.vehicle_speed)
    graph = load_road_graph(cfg.arena.graph)
    return RoadGraphArena(graph, cfg.sim.vehicle_speed, cfg.sim.d_max)


def build_params(cfg: ScenarioConfig) -> SimParams:
    s = cfg.sim
    return SimParams(
        charge_rate_kwh_per_s=s.charge_rate_kwh_per_s,
        m_max_s=s.m_max_s,
        d_max=s.d_max,
        vehicle_speed=s.vehicle_speed,
        arrival_rate_per_s=s.arrival_rate_per_s,
        horizon_s=s.horizon_s,
    )


def build_stations(cfg: ScenarioConfig, arena, rng: np.random.Generator) -> list[Station]:
    st = cfg.stations
    length = cfg.sim.horizon_s + cfg.sim.profile_tail_s
    out = []
    for k, kind in enumerate(st.renewables):
        if arena.mode == "unit_square":
            x, y = st.positions[k]
            pos = Position(x, y)
        else:
            pos = arena.position(st.nodes[k])
        if kind == "pv":
            prof = RenewableProfile(
                RenewableKind.PV,
                st.pv.nominal_kw,
                pv_profile(length, st.pv.nominal_kw, st.pv.daylight_start_s, st.pv.daylight_end_s),
            )
        elif kind == "wind":
            prof = RenewableProfile(
                RenewableKind.WIND,
                st.wind.nominal_kw,
                wind_profile(rng, length, st.wind.nominal_kw, st.wind.volatility),
            )
        else:
            prof = RenewableProfile.none(length)
        out.append(Station(k, pos, prof, st.tariff_eur_per_kwh, 0.0, f"station:{k}"))
    return out


def weight_sampler(cfg: ScenarioConfig) -> Callable[[np.random.Generator], PreferenceWeights]:
    w = cfg.weights
    if w.mode == "fixed":
        fixed = PreferenceWeights.of(w.fixed)
        return lambda rng: fixed
    if w.mode == "mixture":
        comps = [PreferenceWeights.of(c.weights) for c in w.mixture]
        cum = np.cumsum([c.share for c in w.mixture])
        cum[-1] = 1.0

        def draw(rng):
            return comps[int(np.searchsorted(cum, rng.random(), side="right"))]

        return draw
    raise ConfigError("weights.mode: 'sweep' describes a batch of runs; use weight_sweep")


def spawn_vehicles(
    rng: np.random.Generator,
    params: SimParams,
    dt: float,
    arena,
    cfg: ScenarioConfig,
    first_id: int = 0,
    now: float = 0.0,
    draw_weights: Callable[[np.random.Generator], PreferenceWeights] | None = None,
) -> list[Vehicle]:
    """Poisson(lambda * dt) new vehicles with uniform positions and Gaussian requests."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    lam = params.arrival_rate_per_s * dt
    n = int(rng.poisson(lam)) if lam > 0 else 0
    if n == 0:
        return []
    draw_weights = draw_weights or weight_sampler(cfg)
    d = cfg.demand
    out = []
    for k in range(n):
        pos = arena.sample_position(rng)
        req = sample_energy_request(rng, d.mean_kwh, d.std_kwh, d.min_kwh, d.max_kwh)
        out.append(Vehicle(first_id + k, pos, req, draw_weights(rng), now))
    return out


# -- world state --------------------------------------------------------------


@dataclass(slots=True)
class Trip:
    """Mutable per-vehicle record kept by the engine."""

    vehicle: Vehicle
    assigned: int
    target: int
    wait_steps: int
    assign_cost: float
    assign_distance: float
    assign_travel_s: float
    arrival_time: float
    deadline: float
    remaining_kwh: float
    defected: bool = False
    price_eur: float = 0.0
    res_kwh: float = 0.0
    delivered_kwh: float = 0.0
    arrived_at: float | None = None
    charge_start: float | None = None
    charge_end: float | None = None
    escrow_id: str | None = None
    bond: float = 0.0
    phantom_open: bool = False


@dataclass
class WorldState:
    stations: list[Station]
    params: SimParams
    clock: int = 0
    queued_kwh: list[float] = field(default_factory=list)
    queues: list[deque] = field(default_factory=list)
    in_transit: list[tuple[float, int, Trip]] = field(default_factory=list)
    phantoms: list[tuple[float, int, Trip]] = field(default_factory=list)
    completed: list[Trip] = field(default_factory=list)
    event_log: list[tuple[float, str, int, int]] = field(default_factory=list)
    ledger: Ledger | None = None
    on_settlement: Callable[[float], None] | None = None

    def __post_init__(self) -> None:
        n = len(self.stations)
        if not self.queued_kwh:
            self.queued_kwh = [0.0] * n
        if not self.queues:
            self.queues = [deque() for _ in range(n)]

    def snapshot(self) -> list[Station]:
        q = self.queued_kwh
        return [replace(s, queued_energy_kwh=max(q[i], 0.0)) for i, s in enumerate(self.stations)]

    def commit(self, trip: Trip) -> None:
        """Register an accepted assignment: energy joins the assigned queue now."""
        self.queued_kwh[trip.assigned] += trip.vehicle.request.amount_kwh
        heapq.heappush(self.in_transit, (trip.arrival_time, trip.vehicle.id, trip))
        if trip.defected:
            trip.phantom_open = True
            heapq.heappush(self.phantoms, (trip.deadline, trip.vehicle.id, trip))
        self.event_log.append((float(self.clock), "assign", trip.vehicle.id, trip.assigned))

    def check_invariants(self, tol: float = 1e-6) -> None:
        n = len(self.stations)
        expect = [0.0] * n
        for i, q in enumerate(self.queues):
            expect[i] += sum(t.remaining_kwh for t in q)
        for _, _, trip in self.in_transit:
            if not trip.defected:
                expect[trip.assigned] += trip.remaining_kwh
        for _, _, trip in self.phantoms:
            if trip.phantom_open:
                expect[trip.assigned] += trip.vehicle.request.amount_kwh
        for i in range(n):
            if self.queued_kwh[i] < -tol:
                raise InvariantViolation(f"station {i}: negative queued energy {self.queued_kwh[i]}")
            if abs(self.queued_kwh[i] - expect[i]) > tol:
                raise InvariantViolation(
                    f"station {i}: queued {self.queued_kwh[i]:.9f} kWh != accounted {expect[i]:.9f} kWh"
                )


def _settle_on_arrival(world: WorldState, trip: Trip, t: float) -> None:
    ledger = world.ledger
    if ledger is None or trip.escrow_id is None:
        return
    acct = f"vehicle:{trip.vehicle.id}"
    ledger.record_presence(acct, trip.target, trip.arrival_time)
    att = ledger.attest_position(f"observer:{trip.target}", acct, trip.target, trip.arrival_time)
    if trip.target == trip.assigned:
        ledger.settle_escrow(trip.escrow_id, att, now=t)
        if world.on_settlement:
            world.on_settlement(t)


def step(world: WorldState, dt: int = 1) -> WorldState:
    """Advance the world by one second."""
    if dt != 1:
        raise ValueError("the engine runs on a fixed 1 s step")
    t = world.clock
    er = world.params.charge_rate_kwh_per_s
    q = world.queued_kwh

    # phantom commitments and bonds of defectors lapse after their deadline
    while world.phantoms and world.phantoms[0][0] < t:
        _, _, trip = heapq.heappop(world.phantoms)
        trip.phantom_open = False
        q[trip.assigned] -= trip.vehicle.request.amount_kwh
        world.event_log.append((float(t), "purge", trip.vehicle.id, trip.assigned))
    while world.in_transit and world.in_transit[0][0] <= t:
        _, _, trip = heapq.heappop(world.in_transit)
        trip.arrived_at = trip.arrival_time
        if trip.defected:
            # uncommitted arrival at the nearest station
            q[trip.target] += trip.remaining_kwh
            m = trip.vehicle.request.amount_kwh
            st = replace(world.stations[trip.target], queued_energy_kwh=max(q[trip.target] - m, 0.0))
            trip.res_kwh = min(m, res_forecast(st, m, 0.0, world.params, float(t)))
            trip.price_eur = st.tariff_eur_per_kwh * (m - trip.res_kwh)
        world.queues[trip.target].append(trip)
        world.event_log.append((trip.arrival_time, "arrive", trip.vehicle.id, trip.target))
        _settle_on_arrival(world, trip, float(t))

    # arrivals first: an attested arrival before the deadline wins over expiry
    if world.ledger is not None:
        for _ in world.ledger.expire(float(t)):
            if world.on_settlement:
                world.on_settlement(float(t))

    for i, queue in enumerate(world.queues):
        if not queue:
            continue
        head = queue[0]
        if head.charge_start is None:
            head.charge_start = float(t)
        delta = er if head.remaining_kwh > er else head.remaining_kwh
        head.remaining_kwh -= delta
        head.delivered_kwh += delta
        q[i] -= delta
        if head.remaining_kwh <= DONE_EPS:
            q[i] -= head.remaining_kwh
            head.delivered_kwh += head.remaining_kwh
            head.remaining_kwh = 0.0
            head.charge_end = float(t + 1)
            queue.popleft()
            world.completed.append(head)
            world.event_log.append((float(t + 1), "complete", head.vehicle.id, i))

    world.clock = t + 1
    if world.ledger is not None:
        world.ledger.advance(float(world.clock))
    return world


# -- results ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class VehicleRecord:
    vehicle_id: int
    spawn: float
    x: float
    y: float
    node: str | None
    request_kwh: float
    weights: tuple[float, float, float]
    assigned: int
    station: int
    defected: bool
    wait_steps: int
    cost: float
    distance: float
    travel_time_s: float
    arrival: float | None
    charge_start: float | None
    charge_end: float | None
    energy_kwh: float
    res_kwh: float
    price_eur: float

    @property
    def completed(self) -> bool:
        return self.charge_end is not None


@dataclass
class RunResult:
    seed: int
    solver: str
    vehicles: list[VehicleRecord]
    station_ids: list[int]
    station_positions: list[tuple[float, float]]
    station_kinds: list[str]
    tariffs: list[float]
    generated_kwh: list[float]
    sample_times: np.ndarray
    queue_length: np.ndarray
    queued_kwh: np.ndarray
    renewable_kw: np.ndarray
    charge_rate_kwh_per_s: float
    controller_trace: list[TraceRow] = field(default_factory=list)
    ledger: Ledger | None = None
    events: list[tuple[float, str, int, int]] = field(default_factory=list)

    @property
    def completed(self) -> list[VehicleRecord]:
        return [v for v in self.vehicles if v.charge_end is not None]


def _record(trip: Trip) -> VehicleRecord:
    v = trip.vehicle
    return VehicleRecord(
        vehicle_id=v.id,
        spawn=v.spawn_time,
        x=v.position.x,
        y=v.position.y,
        node=v.position.node,
        request_kwh=v.request.amount_kwh,
        weights=v.weights.as_tuple(),
        assigned=trip.assigned,
        station=trip.target,
        defected=trip.defected,
        wait_steps=trip.wait_steps,
        cost=trip.assign_cost,
        distance=trip.assign_distance,
        travel_time_s=trip.assign_travel_s,
        arrival=trip.arrived_at,
        charge_start=trip.charge_start,
        charge_end=trip.charge_end,
        energy_kwh=trip.delivered_kwh,
        res_kwh=trip.res_kwh if trip.charge_end is not None else 0.0,
        price_eur=trip.price_eur if trip.charge_end is not None else 0.0,
    )


# -- scenario runner ------------------------------------------------------------


def _nearest(vehicle: Vehicle, stations: Sequence[Station], arena) -> tuple[int, float]:
    best = None
    for s in stations:
        est = arena.estimate(vehicle.position, s.position)
        key = (est.distance, s.id)
        if best is None or key < best[0]:
            best = (key, est.travel_time_s)
    return best[0][1], best[1]


def run_scenario(
    cfg: ScenarioConfig,
    seed: int,
    *,
    check_invariants: bool = False,
    keep_events: bool = False,
    arena=None,
) -> RunResult:
    """Simulate one run of ``cfg`` over its horizon with run seed ``seed``."""
    if cfg.weights.mode == "sweep":
        raise ConfigError("weights.mode: 'sweep' describes a batch of runs; use weight_sweep")
    params = build_params(cfg)
    arena = arena if arena is not None else build_arena(cfg)
    rng_arr = stream(seed, STREAM_ARRIVALS)
    rng_asg = stream(seed, STREAM_ASSIGNMENT)
    rng_cmp = stream(seed, STREAM_COMPLIANCE)
    stations = build_stations(cfg, arena, stream(seed, STREAM_RENEWABLES))
    draw_weights = weight_sampler(cfg)

    comp = cfg.compliance
    ledger = None
    if cfg.ledger.enabled:
        supply = 1e12
        ledger = Ledger(supply, stream(seed, STREAM_LEDGER), cfg.ledger.pow_delay_s)
        for s in stations:
            ledger.register_station(s.id, s.account_id)
    world = WorldState(stations, params, ledger=ledger)

    model = ComplianceModel(comp.model.base_compliance, comp.model.sensitivity)
    cc = comp.controller
    controller = ControllerState(cc.initial_bond, cc.target, cc.k_p, cc.k_i, 0.0, cc.c_min, cc.c_max)
    trace: list[TraceRow] = []
    ctl = {"state": controller, "q_est": cc.target, "count": 0}

    def on_settlement(now: float) -> None:
        if comp.mode != "closed_loop":
            return
        ctl["count"] += 1
        if ctl["count"] % comp.window_settlements == 0:
            ctl["q_est"] = estimate_compliance(ledger.settlements, comp.estimate_window, ctl["q_est"])
            ctl["state"] = controller_step(ctl["state"], ctl["q_est"])
            trace.append(
                TraceRow(
                    ctl["count"] // comp.window_settlements,
                    now,
                    ctl["q_est"],
                    compliance_response(model, ctl["state"].bond),
                    ctl["state"].bond,
                )
            )

    world.on_settlement = on_settlement
    solve_central = cfg.solver.kind == "centralized"
    trips: list[Trip] = []
    horizon = int(cfg.sim.horizon_s)
    every = cfg.sim.sample_every_s
    n_samples = (horizon + every - 1) // every
    n_st = len(stations)
    qlen = np.zeros((n_samples, n_st), dtype=np.int64)
    qkwh = np.zeros((n_samples, n_st))
    ren = np.zeros((n_samples, n_st))
    next_id = 0

    for t in range(horizon):
        now = float(t)
        for v in spawn_vehicles(rng_arr, params, 1.0, arena, cfg, next_id, now, draw_weights):
            next_id += 1
            trips.append(_admit(world, v, arena, params, cfg, model, ctl, solve_central, rng_asg, rng_cmp, now))
        if t % every == 0:
            k = t // every
            for i in range(n_st):
                qlen[k, i] = len(world.queues[i])
                qkwh[k, i] = world.queued_kwh[i]
                ren[k, i] = stations[i].renewable.power_at(t)
        step(world)
        if check_invariants:
            world.check_invariants()

    if ledger is not None:
        ledger.tangle.flush()
    return RunResult(
        seed=seed,
        solver=cfg.solver.kind,
        vehicles=[_record(tr) for tr in trips],
        station_ids=[s.id for s in stations],
        station_positions=[(s.position.x, s.position.y) for s in stations],
        station_kinds=[s.renewable.kind.value for s in stations],
        tariffs=[s.tariff_eur_per_kwh for s in stations],
        generated_kwh=[s.renewable.total_kwh(horizon) for s in stations],
        sample_times=np.arange(n_samples) * every,
        queue_length=qlen,
        queued_kwh=qkwh,
        renewable_kw=ren,
        charge_rate_kwh_per_s=params.charge_rate_kwh_per_s,
        controller_trace=trace,
        ledger=ledger,
        events=world.event_log if keep_events else [],
    )


def _admit(world, vehicle, arena, params, cfg, model, ctl, solve_central, rng_asg, rng_cmp, now) -> Trip:
    snapshot = world.snapshot()
    if solve_central:
        out: AssignmentOutcome = centralized_assign(vehicle, snapshot, arena, params, now)
    else:
        out = decentralized_assign(vehicle, snapshot, arena, params, rng_asg, now, cfg.solver.step_limit)
    comp = cfg.compliance
    ledger = world.ledger
    m = vehicle.request.amount_kwh
    assigned = out.station_id
    target, travel_to_target = assigned, out.travel_time_s
    deadline = now + comp.deadline_slack * out.travel_time_s

    bond = 0.0
    escrow_id = None
    if ledger is not None:
        bond = ctl["state"].bond if comp.mode == "closed_loop" else cfg.ledger.fixed_bond
        acct = f"vehicle:{vehicle.id}"
        ledger.endow(acct, cfg.ledger.endowment, now)
        try:
            escrow_id = ledger.open_escrow(
                acct, snapshot[assigned].account_id, bond, deadline, now, station_id=assigned
            ).id
        except InsufficientBalance:
            bond = 0.0

    if comp.mode == "fixed":
        q_eff = comp.q
    elif comp.mode == "closed_loop":
        q_eff = compliance_response(model, bond)
    else:
        q_eff = None
    if q_eff is not None:
        nearest_id, nearest_travel = _nearest(vehicle, snapshot, arena)
        chosen = resolve_compliance(vehicle, snapshot[assigned], snapshot[nearest_id], q_eff, rng_cmp)
        if chosen.id != assigned:
            target, travel_to_target = chosen.id, nearest_travel
        vehicle = replace(vehicle, compliant_draw=chosen.id == assigned)

    trip = Trip(
        vehicle=vehicle,
        assigned=assigned,
        target=target,
        wait_steps=out.wait_steps,
        assign_cost=out.cost_at_assignment.aggregate,
        assign_distance=out.distance,
        assign_travel_s=out.travel_time_s,
        arrival_time=now + travel_to_target,
        deadline=deadline,
        remaining_kwh=m,
        defected=target != assigned,
        escrow_id=escrow_id,
        bond=bond,
    )
    if not trip.defected:
        st = snapshot[assigned]
        trip.res_kwh = min(m, res_forecast(st, m, out.travel_time_s, params, now))
        trip.price_eur = st.tariff_eur_per_kwh * (m - trip.res_kwh)
    world.commit(trip)
    return trip


def run_monte_carlo(
    cfg: ScenarioConfig,
    n_runs: int | None = None,
    base_seed: int | None = None,
    workers: int = 1,
    **kwargs,
) -> list[RunResult]:
    """Independent runs with seeds ``base_seed + k``, returned in run order."""
    n_runs = cfg.monte_carlo.n_runs if n_runs is None else n_runs
    base_seed = cfg.monte_carlo.base_seed if base_seed is None else base_seed
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = [base_seed + k for k in range(n_runs)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(partial(_run_one, cfg, **kwargs), seeds))
    arena = build_arena(cfg)
    return [run_scenario(cfg, s, arena=arena, **kwargs) for s in seeds]


def _run_one(cfg: ScenarioConfig, seed: int, **kwargs) -> RunResult:
    return run_scenario(cfg, seed, **kwargs)
