"""Driver compliance, ledger-based compliance estimation and bond control.

Drivers honour an accepted recommendation with probability ``q`` and
otherwise head for their nearest station.  ``q`` grows with the bond
value ``C`` along a saturating exponential; a PI controller adjusts ``C``
once per settlement window so that the compliance read back from the
ledger tracks a target level.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from .domain import Station, Vehicle
from .ledger import EscrowStatus, Ledger, Settlement


@dataclass(frozen=True, slots=True)
class ComplianceModel:
    base_compliance: float = 0.4
    sensitivity: float = 5.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.base_compliance <= 1.0:
            raise ValueError("base_compliance must lie in [0, 1]")
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")


def compliance_response(model: ComplianceModel, bond: float) -> float:
    """Probability of compliance when ``bond`` tokens are at stake."""
    if bond < 0:
        raise ValueError("bond must be non-negative")
    q0 = model.base_compliance
    return q0 + (1.0 - q0) * -math.expm1(-bond / model.sensitivity)


def bond_for_compliance(model: ComplianceModel, target: float) -> float:
    """Inverse of :func:`compliance_response` (inf if ``target`` is unreachable)."""
    q0 = model.base_compliance
    if target <= q0:
        return 0.0
    if target >= 1.0:
        return math.inf
    return -model.sensitivity * math.log1p(-(target - q0) / (1.0 - q0))


def resolve_compliance(
    vehicle: Vehicle,
    assigned: Station,
    nearest: Station,
    q_effective: float,
    rng: np.random.Generator,
) -> Station:
    """Station the driver actually drives to.

    Exactly one uniform is drawn per call, whatever ``q_effective`` is, so
    runs that differ only in compliance level see the same random stream.
    """
    if not 0.0 <= q_effective <= 1.0:
        raise ValueError("q_effective must lie in [0, 1]")
    return assigned if rng.random() < q_effective else nearest


def estimate_compliance(
    settlements: Sequence[Settlement], window_size: int, previous: float
) -> float:
    """Share of returned bonds among the last ``window_size`` settlements."""
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    recent = settlements[-window_size:]
    if not recent:
        return previous
    returned = sum(1 for s in recent if s.status is EscrowStatus.RETURNED)
    return returned / len(recent)


@dataclass(frozen=True, slots=True)
class ControllerState:
    bond: float
    target: float
    k_p: float = 20.0
    k_i: float = 2.0
    integral: float = 0.0
    c_min: float = 0.0
    c_max: float = 50.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.target <= 1.0:
            raise ValueError("target compliance must lie in [0, 1]")
        if self.c_min > self.c_max:
            raise ValueError("c_min must not exceed c_max")
        if not self.c_min <= self.bond <= self.c_max:
            raise ValueError(f"bond {self.bond} outside [{self.c_min}, {self.c_max}]")


def controller_step(state: ControllerState, q_measured: float) -> ControllerState:
    """One incremental PI update of the bond value.

    The integral only accumulates while the unclamped update stays inside
    the bond limits.
    """
    if not 0.0 <= q_measured <= 1.0:
        raise ValueError("q_measured must lie in [0, 1]")
    error = state.target - q_measured
    integral = state.integral + error
    bond = state.bond + state.k_p * error + state.k_i * integral
    if not state.c_min <= bond <= state.c_max:
        integral = state.integral
        bond = state.bond + state.k_p * error + state.k_i * integral
        bond = min(max(bond, state.c_min), state.c_max)
    return replace(state, bond=bond, integral=integral)


@dataclass(frozen=True, slots=True)
class TraceRow:
    window: int
    time: float
    q_measured: float
    q_true: float
    bond: float


def simulate_closed_loop(
    model: ComplianceModel,
    controller: ControllerState,
    n_windows: int,
    window_settlements: int = 20,
    estimate_window: int | None = None,
    rng: np.random.Generator | None = None,
    noiseless: bool = False,
    ledger: Ledger | None = None,
) -> list[TraceRow]:
    """Drive the bond controller against the response curve.

    With ``noiseless`` the controller reads ``q(C)`` directly.  Otherwise
    every trip opens an escrow on a ledger, the driver complies with
    probability ``q(C)``, the bond is returned on an attested arrival or
    forfeited after the deadline, and the controller reads the returned
    share of the recent settlements.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    est_window = estimate_window or window_settlements
    rows: list[TraceRow] = []
    state = controller
    q_est = state.target

    if noiseless:
        for w in range(n_windows):
            q_est = compliance_response(model, state.bond)
            state = controller_step(state, q_est)
            rows.append(TraceRow(w, float(w), q_est, compliance_response(model, state.bond), state.bond))
        return rows

    if ledger is None:
        ledger = Ledger(supply=1e9, rng=np.random.default_rng(rng.integers(2**32)))
    ledger.register_station(0, "station:0")
    now = 0.0
    trip = 0
    for w in range(n_windows):
        q = compliance_response(model, state.bond)
        for _ in range(window_settlements):
            acct = f"vehicle:{trip}"
            trip += 1
            ledger.endow(acct, state.c_max, now)
            c = ledger.open_escrow(acct, "station:0", state.bond, now + 2.0, now, station_id=0)
            if rng.random() < q:
                ledger.record_presence(acct, 0, now + 1.0)
                att = ledger.attest_position("observer:0", acct, 0, now + 1.0)
                ledger.settle_escrow(c.id, att)
            else:
                ledger.settle_escrow(c.id, now=now + 3.0)
            now += 3.0
        q_est = estimate_compliance(ledger.settlements, est_window, q_est)
        state = controller_step(state, q_est)
        rows.append(TraceRow(w, now, q_est, compliance_response(model, state.bond), state.bond))
    return rows
