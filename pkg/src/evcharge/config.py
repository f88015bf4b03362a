"""Scenario description, validation and seed management.

A scenario is a YAML document.  Parsing fills every default, resolves
derived values (station placements, renewable mix, speed and normalization
distance for the chosen arena) and returns a frozen ``ScenarioConfig``.
``echo`` writes the resolved document back out; parsing the echo yields
an equal config, so any run can be reproduced from its echoed header.

Random streams: run ``k`` of a Monte Carlo batch uses seed
``base_seed + k``; each subsystem then draws from
``numpy.random.default_rng([seed, STREAM])`` with the offsets below, so
switching compliance or the solver never perturbs the arrival sequence.
"""

from __future__ import annotations

import math
from typing import Annotated, Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .domain import (
    DEFAULT_ARRIVAL_RATE,
    DEFAULT_CHARGE_RATE,
    DEFAULT_HORIZON_S,
    DEFAULT_M_MAX_S,
    DEFAULT_MAX_REQUEST_KWH,
    EVChargeError,
    PreferenceWeights,
)

SCHEMA_VERSION = 1

STREAM_ARRIVALS = 1
STREAM_ASSIGNMENT = 2
STREAM_COMPLIANCE = 3
STREAM_RENEWABLES = 4
STREAM_LEDGER = 5


class ConfigError(EVChargeError, ValueError):
    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or [message]


def stream(seed: int, offset: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), offset])


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Triple = Annotated[list[float], Field(min_length=3, max_length=3)]
Pair = Annotated[list[float], Field(min_length=2, max_length=2)]


class ArenaConfig(_Model):
    mode: Literal["unit_square", "road_graph"] = "unit_square"
    graph: str | None = None

    @model_validator(mode="after")
    def _graph_needed(self):
        if self.mode == "road_graph" and not self.graph:
            raise ValueError("road_graph arena needs a graph (file path or builtin:<name>)")
        if self.mode == "unit_square" and self.graph is not None:
            raise ValueError("graph is only valid for the road_graph arena")
        return self


class PVConfig(_Model):
    nominal_kw: float = Field(10.0, ge=0)
    # daylight window relative to simulation start; default start is 09:00 with sun 06:00-20:00
    daylight_start_s: float = -3 * 3600.0
    daylight_end_s: float = 11 * 3600.0

    @model_validator(mode="after")
    def _window(self):
        if self.daylight_end_s <= self.daylight_start_s:
            raise ValueError("daylight_end_s must be after daylight_start_s")
        return self


class WindConfig(_Model):
    nominal_kw: float = Field(5.0, ge=0)
    # std of the per-second change in capacity factor
    volatility: float = Field(0.002, ge=0)


class StationsConfig(_Model):
    count: int = Field(12, ge=1)
    placement: Literal["grid", "random", "explicit"] = "grid"
    placement_seed: int = 7
    positions: list[Pair] | None = None
    nodes: list[str] | None = None
    renewables: list[Literal["none", "pv", "wind"]] | None = None
    tariff_eur_per_kwh: float = Field(0.45, gt=0)
    pv: PVConfig = PVConfig()
    wind: WindConfig = WindConfig()


class SimConfig(_Model):
    charge_rate_kwh_per_s: float = Field(DEFAULT_CHARGE_RATE, gt=0)
    m_max_s: float = Field(DEFAULT_M_MAX_S, gt=0)
    d_max: float | None = Field(None, gt=0)
    vehicle_speed: float | None = Field(None, gt=0)
    arrival_rate_per_s: float = Field(DEFAULT_ARRIVAL_RATE, ge=0)
    horizon_s: int = Field(DEFAULT_HORIZON_S, gt=0)
    sample_every_s: int = Field(60, gt=0)
    # renewable profiles extend past the horizon so late forecasts stay defined
    profile_tail_s: int = Field(12 * 3600, ge=0)


class DemandConfig(_Model):
    mean_kwh: float = Field(5.0, gt=0)
    std_kwh: float = Field(1.2, ge=0)
    min_kwh: float = Field(1.0, gt=0)
    max_kwh: float = Field(DEFAULT_MAX_REQUEST_KWH, gt=0)

    @model_validator(mode="after")
    def _range(self):
        if self.max_kwh <= self.min_kwh:
            raise ValueError("max_kwh must exceed min_kwh")
        return self


class MixtureComponent(_Model):
    weights: Triple
    share: float = Field(gt=0)

    @field_validator("weights")
    @classmethod
    def _convex(cls, v):
        PreferenceWeights.of(v)
        return v


class WeightsConfig(_Model):
    mode: Literal["fixed", "mixture", "sweep"] = "fixed"
    fixed: Triple = [1.0, 0.0, 0.0]
    mixture: list[MixtureComponent] | None = None
    sweep_step: float = Field(0.1, gt=0, le=1)

    @field_validator("fixed")
    @classmethod
    def _convex(cls, v):
        PreferenceWeights.of(v)
        return v

    @model_validator(mode="after")
    def _mixture(self):
        if self.mode == "mixture":
            if not self.mixture:
                raise ValueError("mixture mode needs at least one component")
            if abs(sum(c.share for c in self.mixture) - 1.0) > 1e-9:
                raise ValueError("mixture shares must sum to 1")
        return self


class SolverConfig(_Model):
    kind: Literal["centralized", "decentralized"] = "centralized"
    step_limit: int = Field(10_000, ge=1)


class ComplianceModelConfig(_Model):
    base_compliance: float = Field(0.4, ge=0, le=1)
    sensitivity: float = Field(5.0, gt=0)


class ControllerConfig(_Model):
    target: float = Field(0.9, ge=0, le=1)
    k_p: float = 20.0
    k_i: float = 2.0
    c_min: float = Field(0.0, ge=0)
    c_max: float = Field(50.0, ge=0)
    initial_bond: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _bounds(self):
        if self.c_min > self.c_max:
            raise ValueError("c_min must not exceed c_max")
        if not self.c_min <= self.initial_bond <= self.c_max:
            raise ValueError("initial_bond must lie in [c_min, c_max]")
        return self


class ComplianceConfig(_Model):
    mode: Literal["off", "fixed", "closed_loop"] = "off"
    q: float = Field(1.0, ge=0, le=1)
    model: ComplianceModelConfig = ComplianceModelConfig()
    controller: ControllerConfig = ControllerConfig()
    window_settlements: int = Field(20, ge=1)
    estimate_window: int = Field(20, ge=1)
    deadline_slack: float = Field(2.0, ge=1)


class LedgerConfig(_Model):
    enabled: bool = False
    pow_delay_s: float = Field(2.0, ge=0)
    endowment: float | None = Field(None, ge=0)
    fixed_bond: float = Field(1.0, ge=0)


class MonteCarloConfig(_Model):
    n_runs: int = Field(20, ge=1)
    base_seed: int = Field(0, ge=0)


class OutputsConfig(_Model):
    directory: str = "out"
    reports: list[Literal["summary", "vehicles", "timeseries", "controller", "ledger"]] = [
        "summary",
        "vehicles",
        "timeseries",
        "controller",
        "ledger",
    ]


class ScenarioConfig(_Model):
    version: Literal[1] = SCHEMA_VERSION
    arena: ArenaConfig = ArenaConfig()
    stations: StationsConfig = StationsConfig()
    sim: SimConfig = SimConfig()
    demand: DemandConfig = DemandConfig()
    weights: WeightsConfig = WeightsConfig()
    solver: SolverConfig = SolverConfig()
    compliance: ComplianceConfig = ComplianceConfig()
    ledger: LedgerConfig = LedgerConfig()
    monte_carlo: MonteCarloConfig = MonteCarloConfig()
    outputs: OutputsConfig = OutputsConfig()

    @model_validator(mode="after")
    def _cross(self):
        if self.compliance.mode == "closed_loop" and not self.ledger.enabled:
            raise ValueError("compliance.mode closed_loop requires ledger.enabled")
        return self


# -- placement ------------------------------------------------------------


def grid_positions(n: int) -> list[list[float]]:
    """Cell centres of the most square grid with at least ``n`` cells, row-major."""
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    out = []
    for k in range(n):
        r, c = divmod(k, cols)
        out.append([(c + 0.5) / cols, (r + 0.5) / rows])
    return out


def default_renewables(n: int) -> list[str]:
    """Equal thirds of PV, wind and none, interleaved so that kinds spread out spatially."""
    cycle = ("pv", "wind", "none")
    return [cycle[k % 3] for k in range(n)]


def _resolve(cfg: ScenarioConfig) -> ScenarioConfig:
    from .mobility import load_road_graph

    st = cfg.stations
    sim = cfg.sim
    updates_st: dict[str, Any] = {}
    updates_sim: dict[str, Any] = {}
    errors: list[str] = []

    if cfg.arena.mode == "unit_square":
        if st.nodes is not None:
            errors.append("stations.nodes: only valid in road_graph arena")
        if st.placement == "explicit":
            positions = st.positions
            if positions is None:
                errors.append("stations.positions: required for explicit placement")
                positions = []
        else:
            if st.placement == "grid":
                positions = grid_positions(st.count)
            else:
                rng = np.random.default_rng(st.placement_seed)
                positions = [[float(x), float(y)] for x, y in rng.random((st.count, 2))]
            if st.positions is not None and st.positions != positions:
                errors.append(
                    f"stations.positions: do not match {st.placement} placement; "
                    "use placement: explicit to set them by hand"
                )
        if len(positions) != st.count:
            errors.append(f"stations.positions: {len(positions)} positions for count {st.count}")
        for k, (x, y) in enumerate(positions):
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                errors.append(f"stations.positions.{k}: ({x}, {y}) lies outside the unit square")
        updates_st["positions"] = positions
        updates_sim.setdefault("vehicle_speed", sim.vehicle_speed or 0.02)
        updates_sim.setdefault("d_max", sim.d_max or math.sqrt(2.0))
    else:
        if st.positions is not None:
            errors.append("stations.positions: not valid in road_graph arena, use stations.nodes")
        try:
            graph = load_road_graph(cfg.arena.graph)
        except (OSError, EVChargeError) as exc:
            raise ConfigError(f"arena.graph: {exc}", [f"arena.graph: {exc}"]) from None
        ids = sorted(graph.nodes)
        if st.placement == "explicit":
            nodes = st.nodes
            if nodes is None:
                errors.append("stations.nodes: required for explicit placement")
                nodes = []
        else:
            rng = np.random.default_rng(st.placement_seed)
            if st.count > len(ids):
                errors.append(f"stations.count: graph has only {len(ids)} nodes")
                nodes = []
            elif st.placement == "random":
                nodes = [ids[i] for i in sorted(rng.choice(len(ids), st.count, replace=False))]
            else:
                nodes = _spread_nodes(graph, st.count)
            if st.nodes is not None and st.nodes != nodes:
                errors.append(
                    f"stations.nodes: do not match {st.placement} placement; "
                    "use placement: explicit to set them by hand"
                )
        if len(nodes) != st.count:
            errors.append(f"stations.nodes: {len(nodes)} nodes for count {st.count}")
        for k, node in enumerate(nodes):
            if node not in graph.nodes:
                errors.append(f"stations.nodes.{k}: node {node!r} is not in the graph")
        if len(set(nodes)) != len(nodes):
            errors.append("stations.nodes: duplicate station nodes")
        updates_st["nodes"] = list(nodes)
        updates_sim["vehicle_speed"] = sim.vehicle_speed or 10.0
        updates_sim["d_max"] = sim.d_max or graph.diameter()

    ren = st.renewables if st.renewables is not None else default_renewables(st.count)
    if len(ren) != st.count:
        errors.append(f"stations.renewables: {len(ren)} entries for count {st.count}")
    updates_st["renewables"] = list(ren)

    if cfg.ledger.enabled and cfg.ledger.endowment is None:
        ledger = cfg.ledger.model_copy(update={"endowment": 10.0 * cfg.compliance.controller.c_max})
    else:
        ledger = cfg.ledger

    if errors:
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors), errors)
    return cfg.model_copy(
        update={
            "stations": st.model_copy(update=updates_st),
            "sim": sim.model_copy(update=updates_sim),
            "ledger": ledger,
        }
    )


def _spread_nodes(graph, n: int) -> list[str]:
    """Farthest-point selection over shortest-path distance, seeded at the smallest id."""
    ids = sorted(graph.nodes)
    chosen = [ids[0]]
    best = dict(graph.dijkstra(ids[0]))
    while len(chosen) < n:
        nxt = max(ids, key=lambda v: (best.get(v, 0.0), v) if v not in chosen else (-1.0, v))
        chosen.append(nxt)
        for v, d in graph.dijkstra(nxt).items():
            best[v] = min(best.get(v, math.inf), d)
    return sorted(chosen)


# -- parse / echo -----------------------------------------------------------


def _format_validation_error(exc: ValidationError) -> list[str]:
    out = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def from_dict(data: dict | None) -> ScenarioConfig:
    try:
        cfg = ScenarioConfig.model_validate(data or {})
    except ValidationError as exc:
        errs = _format_validation_error(exc)
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(errs), errs) from None
    return _resolve(cfg)


def parse_and_validate(source: str) -> ScenarioConfig:
    """Parse YAML text into a fully resolved scenario."""
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: not valid YAML ({exc})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<root>: scenario must be a mapping")
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    from pathlib import Path

    return parse_and_validate(Path(path).read_text())


def to_dict(cfg: ScenarioConfig) -> dict:
    return cfg.model_dump(mode="json")


def echo(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None, width=100)


def _coerce(value: str):
    return yaml.safe_load(value)


def with_overrides(cfg: ScenarioConfig, overrides: dict[str, Any] | list[str]) -> ScenarioConfig:
    """Apply dotted-path overrides (``{"solver.kind": "decentralized"}`` or ``["a.b=1"]``)."""
    if isinstance(overrides, list):
        pairs = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r}: expected key=value")
            k, v = item.split("=", 1)
            pairs[k.strip()] = _coerce(v)
        overrides = pairs
    data = to_dict(cfg)
    for path, value in overrides.items():
        node = data
        keys = path.split(".")
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"{path}: unknown key {k!r}")
            node = node[k]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(f"{path}: unknown key {keys[-1]!r}")
        node[keys[-1]] = value
        _reopen_derived(data, path)
    return from_dict(data)


def _reopen_derived(data: dict, path: str) -> None:
    # values resolved from what was just overridden must be derived again
    st = data["stations"]
    if path in ("stations.count", "arena.mode", "arena.graph") or path in (
        "stations.placement",
        "stations.placement_seed",
    ):
        if not (path == "stations.placement" and st["placement"] == "explicit"):
            st["positions"] = None
            st["nodes"] = None
    if path == "stations.count":
        st["renewables"] = None
    if path.startswith("arena"):
        data["sim"]["vehicle_speed"] = None
        data["sim"]["d_max"] = None
    if path.startswith("compliance.controller.c_max"):
        data["ledger"]["endowment"] = None
