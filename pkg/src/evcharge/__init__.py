"""Simulation of personalised EV charging-station assignment.

Vehicles are matched to charging stations either by a central argmin of a
weighted time/price/distance cost or by a decentralized green-signal
protocol.  A tangle-style ledger with escrowed bonds and position
attestations models how driver compliance can be observed and regulated.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .compliance import ComplianceModel, ControllerState, compliance_response, simulate_closed_loop
from .config import (
    ConfigError,
    ScenarioConfig,
    echo,
    from_dict,
    load_config,
    parse_and_validate,
    with_overrides,
)
from .engine import RunResult, run_monte_carlo, run_scenario
from .metrics import (
    compare_solvers,
    compliance_curve,
    index_charging_time,
    index_distance,
    index_energy_price,
    participation_entropy,
    participation_factors,
    weight_sweep,
)

__all__ = [
    "__version__",
    "ComplianceModel",
    "ConfigError",
    "ControllerState",
    "RunResult",
    "ScenarioConfig",
    "compare_solvers",
    "compliance_curve",
    "compliance_response",
    "echo",
    "from_dict",
    "index_charging_time",
    "index_distance",
    "index_energy_price",
    "load_config",
    "parse_and_validate",
    "participation_entropy",
    "participation_factors",
    "run_monte_carlo",
    "run_scenario",
    "simulate_closed_loop",
    "weight_sweep",
    "with_overrides",
]
