"""In-process DAG ledger with escrowed token bonds.

The ledger is a tangle: each transaction approves two earlier confirmed
transactions, chosen uniformly among the current tips.  Proof-of-work is
abstracted as a fixed confirmation delay.  Token balances are kept in
integer micro-token units so that conservation checks are exact.

Bond lifecycle::

    open_escrow  -> deposit_bond  (vehicle -> escrow)
    settle_escrow with a valid proof of position before the deadline
                 -> return_bond   (escrow -> vehicle)
    settle_escrow after the deadline without one
                 -> forfeit_bond  (escrow -> station)
"""

from __future__ import annotations

import heapq
import json
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .domain import EVChargeError

TOKEN_UNIT = 1_000_000
TREASURY = "treasury"
DEFAULT_POW_DELAY = 2


class LedgerError(EVChargeError):
    pass


class InsufficientBalance(LedgerError):
    pass


class InvalidParents(LedgerError):
    pass


class CycleDetected(LedgerError):
    pass


class DuplicateTransaction(LedgerError):
    pass


class AlreadySettled(LedgerError):
    pass


class NotYetExpired(LedgerError):
    pass


class InvalidAttestation(LedgerError):
    pass


class NotAtStation(LedgerError):
    pass


def to_units(tokens: float) -> int:
    return int(round(tokens * TOKEN_UNIT))


def to_tokens(units: int) -> float:
    return units / TOKEN_UNIT


class TxKind(str, Enum):
    GENESIS = "genesis"
    TRANSFER = "transfer"
    DEPOSIT_BOND = "deposit_bond"
    RETURN_BOND = "return_bond"
    FORFEIT_BOND = "forfeit_bond"


class EscrowStatus(str, Enum):
    OPEN = "open"
    RETURNED = "returned"
    FORFEITED = "forfeited"


@dataclass(frozen=True, slots=True)
class Attestation:
    """Proof that a vehicle account was physically at a station."""

    observer_id: str
    vehicle_account: str
    station_id: int
    timestamp: float
    serial: int


@dataclass(frozen=True, slots=True)
class Transaction:
    id: str
    issuer: str
    kind: TxKind
    amount: int  # micro-tokens
    timestamp: float
    approves: tuple[str, ...] = ()
    recipient: str | None = None
    contract: str | None = None
    deadline: float | None = None
    pop_attestation: Attestation | None = None
    station_id: int | None = None
    seq: int = -1

    def to_record(self) -> dict:
        pop = self.pop_attestation
        return {
            "seq": self.seq,
            "id": self.id,
            "kind": self.kind.value,
            "issuer": self.issuer,
            "recipient": self.recipient,
            "amount": self.amount,
            "contract": self.contract,
            "deadline": self.deadline,
            "station": self.station_id,
            "approves": list(self.approves),
            "pop": None
            if pop is None
            else {
                "observer": pop.observer_id,
                "vehicle": pop.vehicle_account,
                "station": pop.station_id,
                "timestamp": pop.timestamp,
                "serial": pop.serial,
            },
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, r: dict) -> Transaction:
        pop = r.get("pop")
        att = (
            None
            if pop is None
            else Attestation(
                pop["observer"], pop["vehicle"], int(pop["station"]), float(pop["timestamp"]), int(pop["serial"])
            )
        )
        return cls(
            id=r["id"],
            issuer=r["issuer"],
            kind=TxKind(r["kind"]),
            amount=int(r["amount"]),
            timestamp=float(r["timestamp"]),
            approves=tuple(r["approves"]),
            recipient=r.get("recipient"),
            contract=r.get("contract"),
            deadline=None if r.get("deadline") is None else float(r["deadline"]),
            pop_attestation=att,
            station_id=None if r.get("station") is None else int(r["station"]),
            seq=int(r["seq"]),
        )


class Tangle:
    """Append-only transaction DAG with pending (in proof-of-work) vertices."""

    def __init__(self, rng: np.random.Generator | None = None, pow_delay: float = DEFAULT_POW_DELAY):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.pow_delay = pow_delay
        self.transactions: dict[str, Transaction] = {}  # confirmed, in confirmation order
        self.issued: list[Transaction] = []  # every accepted tx, in issue order
        self.pending: list[tuple[float, Transaction]] = []
        self.tips: set[str] = set()
        self._tip_list: list[str] = []  # sorted view of tips for reproducible sampling
        self._ids: set[str] = set()

    def __len__(self) -> int:
        return len(self.issued)

    def select_parents(self) -> tuple[str, ...]:
        if not self.transactions:
            return ()
        if len(self.tips) >= 2:
            pool = self._tip_list
            n = len(pool)
            i = int(self.rng.integers(n))
            j = int(self.rng.integers(n - 1))
            if j >= i:
                j += 1
            return (pool[i], pool[j])
        # fewer than two tips: fall back to any confirmed transactions
        pool = list(self.transactions)
        if len(pool) == 1:
            return (pool[0], pool[0])
        tip = next(iter(self.tips)) if self.tips else pool[int(self.rng.integers(len(pool)))]
        others = [p for p in pool if p != tip]
        return (tip, others[int(self.rng.integers(len(others)))])

    def submit(self, tx: Transaction, now: float) -> Transaction:
        """Accept ``tx`` into proof-of-work; it confirms ``pow_delay`` later."""
        if tx.id in self._ids:
            raise DuplicateTransaction(f"transaction {tx.id} already issued")
        if tx.kind is TxKind.GENESIS:
            if self.issued:
                raise InvalidParents("genesis must be the first transaction")
            if tx.approves:
                raise InvalidParents("genesis approves nothing")
        else:
            if len(tx.approves) != 2:
                raise InvalidParents(f"{tx.id}: must approve exactly two transactions")
            for p in tx.approves:
                if p not in self.transactions:
                    raise InvalidParents(f"{tx.id}: parent {p} is not a confirmed transaction")
                if self.transactions[p].seq >= len(self.issued):
                    raise CycleDetected(f"{tx.id}: parent {p} does not precede it")
        tx = replace(tx, seq=len(self.issued))
        self._ids.add(tx.id)
        self.issued.append(tx)
        if tx.kind is TxKind.GENESIS:
            self._confirm(tx)
        else:
            self.pending.append((now + self.pow_delay, tx))
        return tx

    def _confirm(self, tx: Transaction) -> None:
        self.transactions[tx.id] = tx
        for p in tx.approves:
            self.tips.discard(p)
        self.tips.add(tx.id)
        self._tip_list = sorted(self.tips)

    def advance(self, now: float) -> list[Transaction]:
        """Confirm every pending transaction whose proof-of-work is done."""
        if not self.pending:
            return []
        ready = [tx for t, tx in self.pending if t <= now]
        if ready:
            self.pending = [(t, tx) for t, tx in self.pending if t > now]
            for tx in ready:
                self._confirm(tx)
        return ready

    def flush(self) -> None:
        for _, tx in self.pending:
            self._confirm(tx)
        self.pending = []


@dataclass(frozen=True, slots=True)
class EscrowContract:
    id: str
    vehicle_account: str
    station_account: str
    station_id: int
    bond_units: int
    deadline: float
    opened_at: float
    status: EscrowStatus = EscrowStatus.OPEN
    settled_at: float | None = None

    @property
    def bond(self) -> float:
        return to_tokens(self.bond_units)


class AccountBook:
    """Token balances in micro-token units; escrowed bonds held separately."""

    def __init__(self) -> None:
        self.balances: dict[str, int] = {}
        self.escrow: dict[str, int] = {}

    def balance(self, account: str) -> int:
        return self.balances.get(account, 0)

    def move(self, src: str, dst: str, units: int) -> None:
        if units < 0:
            raise ValueError("amount must be non-negative")
        have = self.balances.get(src, 0)
        if have < units:
            raise InsufficientBalance(f"{src} holds {have} units, needs {units}")
        self.balances[src] = have - units
        self.balances[dst] = self.balances.get(dst, 0) + units

    def total(self) -> int:
        return sum(self.balances.values()) + sum(self.escrow.values())


@dataclass(frozen=True, slots=True)
class Settlement:
    time: float
    contract_id: str
    status: EscrowStatus


class Ledger:
    """Tangle, account book, escrow contracts and observers in one place.

    All mutations go through this object in a single order, which is also
    the order of the transaction dump.
    """

    def __init__(
        self,
        supply: float,
        rng: np.random.Generator | None = None,
        pow_delay: float = DEFAULT_POW_DELAY,
        now: float = 0.0,
    ):
        self.tangle = Tangle(rng, pow_delay)
        self.book = AccountBook()
        self.supply_units = to_units(supply)
        self.escrows: dict[str, EscrowContract] = {}
        self.settlements: list[Settlement] = []
        self._deadlines: list[tuple[float, str]] = []
        self._station_accounts: dict[int, str] = {}
        self._presence: set[tuple[str, int, float]] = set()
        self._minted: set[Attestation] = set()
        self._n_tx = 0
        self._n_contracts = 0
        self.book.balances[TREASURY] = self.supply_units
        self._issue(TxKind.GENESIS, TREASURY, self.supply_units, now, recipient=TREASURY)

    # -- plumbing -------------------------------------------------------
    def _issue(self, kind: TxKind, issuer: str, units: int, now: float, **extra) -> Transaction:
        self.tangle.advance(now)
        tx = Transaction(
            id=f"tx{self._n_tx:07d}",
            issuer=issuer,
            kind=kind,
            amount=units,
            timestamp=now,
            approves=self.tangle.select_parents(),
            **extra,
        )
        self._n_tx += 1
        return self.tangle.submit(tx, now)

    def advance(self, now: float) -> None:
        self.tangle.advance(now)

    def total_supply(self) -> int:
        return self.book.total()

    def register_station(self, station_id: int, account: str) -> None:
        self._station_accounts[station_id] = account
        self.book.balances.setdefault(account, 0)

    # -- tokens ---------------------------------------------------------
    def transfer(self, src: str, dst: str, amount: float, now: float) -> Transaction:
        units = to_units(amount)
        self.book.move(src, dst, units)
        return self._issue(TxKind.TRANSFER, src, units, now, recipient=dst)

    def endow(self, account: str, amount: float, now: float) -> Transaction:
        return self.transfer(TREASURY, account, amount, now)

    def balance(self, account: str) -> float:
        return to_tokens(self.book.balance(account))

    # -- escrow ---------------------------------------------------------
    def open_escrow(
        self,
        vehicle_account: str,
        station_account: str,
        bond: float,
        deadline: float,
        now: float,
        station_id: int | None = None,
    ) -> EscrowContract:
        units = to_units(bond)
        if units < 0:
            raise ValueError("bond must be non-negative")
        have = self.book.balance(vehicle_account)
        if have < units:
            raise InsufficientBalance(f"{vehicle_account} holds {have} units, bond needs {units}")
        if station_id is None:
            station_id = next(
                (k for k, v in self._station_accounts.items() if v == station_account), -1
            )
        cid = f"esc{self._n_contracts:07d}"
        self._n_contracts += 1
        self.book.balances[vehicle_account] = have - units
        self.book.escrow[cid] = units
        c = EscrowContract(cid, vehicle_account, station_account, station_id, units, deadline, now)
        self.escrows[cid] = c
        heapq.heappush(self._deadlines, (deadline, cid))
        self._issue(
            TxKind.DEPOSIT_BOND,
            vehicle_account,
            units,
            now,
            recipient=station_account,
            contract=cid,
            deadline=deadline,
            station_id=station_id,
        )
        return c

    def record_presence(self, vehicle_account: str, station_id: int, time: float) -> None:
        """Ground truth hook: the simulation reports a physical arrival."""
        self._presence.add((vehicle_account, station_id, time))

    def attest_position(
        self, observer_id: str, vehicle_account: str, station_id: int, time: float
    ) -> Attestation:
        if (vehicle_account, station_id, time) not in self._presence:
            raise NotAtStation(f"{vehicle_account} is not at station {station_id} at t={time}")
        att = Attestation(observer_id, vehicle_account, station_id, time, len(self._minted))
        self._minted.add(att)
        return att

    def _valid_for(self, c: EscrowContract, att: Attestation) -> bool:
        return (
            att in self._minted
            and att.vehicle_account == c.vehicle_account
            and att.station_id == c.station_id
            and att.timestamp <= c.deadline
        )

    def settle_escrow(
        self,
        contract_id: str,
        attestation: Attestation | None = None,
        now: float | None = None,
    ) -> EscrowContract:
        c = self.escrows[contract_id]
        if c.status is not EscrowStatus.OPEN:
            raise AlreadySettled(f"{contract_id} already {c.status.value}")
        if now is None:
            if attestation is None:
                raise ValueError("need an attestation or the current time")
            now = attestation.timestamp
        units = self.book.escrow[contract_id]
        if attestation is not None and self._valid_for(c, attestation):
            status, kind, dst = EscrowStatus.RETURNED, TxKind.RETURN_BOND, c.vehicle_account
        elif now > c.deadline:
            status, kind, dst, attestation = (
                EscrowStatus.FORFEITED,
                TxKind.FORFEIT_BOND,
                c.station_account,
                None,
            )
        elif attestation is not None:
            raise InvalidAttestation(f"{contract_id}: attestation does not satisfy the contract")
        else:
            raise NotYetExpired(f"{contract_id}: deadline {c.deadline} not reached at t={now}")
        del self.book.escrow[contract_id]
        self.book.balances[dst] = self.book.balances.get(dst, 0) + units
        c = replace(c, status=status, settled_at=now)
        self.escrows[contract_id] = c
        self.settlements.append(Settlement(now, contract_id, status))
        self._issue(
            kind,
            "contract:" + contract_id,
            units,
            now,
            recipient=dst,
            contract=contract_id,
            deadline=c.deadline,
            pop_attestation=attestation,
            station_id=c.station_id,
        )
        return c

    def expire(self, now: float) -> list[EscrowContract]:
        """Forfeit every open contract whose deadline has passed."""
        out = []
        heap = self._deadlines
        while heap and heap[0][0] < now:
            _, cid = heapq.heappop(heap)
            if self.escrows[cid].status is EscrowStatus.OPEN:
                out.append(self.settle_escrow(cid, now=now))
        return out

    # -- audit ----------------------------------------------------------
    def records(self) -> Iterator[dict]:
        for tx in self.tangle.issued:
            yield tx.to_record()

    def dump_lines(self) -> Iterator[str]:
        for r in self.records():
            yield json.dumps(r, separators=(",", ":"))


def verify_records(records: Iterable[dict]) -> list[str]:
    """Re-validate a transaction dump; return a list of violations (empty if sound).

    Checks parent references and ordering (acyclicity), exact token
    conservation, non-negative balances, single settlement per contract and
    settlement soundness against the recorded deadline and attestation.
    """
    problems: list[str] = []
    seen: dict[str, int] = {}
    balances: dict[str, int] = {}
    escrow: dict[str, tuple[int, str, str, float, int | None]] = {}
    settled: set[str] = set()
    supply: int | None = None

    for n, r in enumerate(records):
        try:
            tx = Transaction.from_record(r)
        except (KeyError, ValueError, TypeError) as exc:
            problems.append(f"record {n}: malformed ({exc})")
            continue
        where = f"{tx.id} (seq {tx.seq})"
        if tx.id in seen:
            problems.append(f"{where}: duplicate transaction id")
            continue
        if tx.amount < 0:
            problems.append(f"{where}: negative amount")
        if tx.kind is TxKind.GENESIS:
            if seen or tx.approves:
                problems.append(f"{where}: genesis must come first and approve nothing")
            supply = tx.amount
            balances[tx.recipient or TREASURY] = tx.amount
        else:
            if len(tx.approves) != 2:
                problems.append(f"{where}: approves {len(tx.approves)} parents, expected 2")
            for p in tx.approves:
                if p not in seen:
                    problems.append(f"{where}: parent {p} missing or not earlier")
                elif seen[p] >= tx.seq:
                    problems.append(f"{where}: parent {p} does not precede it")
        seen[tx.id] = tx.seq

        if tx.kind is TxKind.TRANSFER:
            if balances.get(tx.issuer, 0) < tx.amount:
                problems.append(f"{where}: overdraft on {tx.issuer}")
            balances[tx.issuer] = balances.get(tx.issuer, 0) - tx.amount
            balances[tx.recipient] = balances.get(tx.recipient, 0) + tx.amount
        elif tx.kind is TxKind.DEPOSIT_BOND:
            if tx.contract in escrow or tx.contract in settled:
                problems.append(f"{where}: contract {tx.contract} deposited twice")
                continue
            if balances.get(tx.issuer, 0) < tx.amount:
                problems.append(f"{where}: overdraft on {tx.issuer}")
            balances[tx.issuer] = balances.get(tx.issuer, 0) - tx.amount
            escrow[tx.contract] = (tx.amount, tx.issuer, tx.recipient, tx.deadline, tx.station_id)
        elif tx.kind in (TxKind.RETURN_BOND, TxKind.FORFEIT_BOND):
            if tx.contract in settled:
                problems.append(f"{where}: contract {tx.contract} settled twice")
                continue
            if tx.contract not in escrow:
                problems.append(f"{where}: settles unknown contract {tx.contract}")
                continue
            units, vehicle, station, deadline, station_id = escrow.pop(tx.contract)
            settled.add(tx.contract)
            if units != tx.amount:
                problems.append(f"{where}: settles {tx.amount} units, escrow held {units}")
            if tx.kind is TxKind.RETURN_BOND:
                pop = tx.pop_attestation
                if pop is None:
                    problems.append(f"{where}: return without proof of position")
                elif (
                    pop.vehicle_account != vehicle
                    or pop.station_id != station_id
                    or pop.timestamp > deadline
                ):
                    problems.append(f"{where}: proof of position does not satisfy the contract")
                if tx.recipient != vehicle:
                    problems.append(f"{where}: bond returned to {tx.recipient}, not {vehicle}")
            else:
                if tx.timestamp <= deadline:
                    problems.append(f"{where}: forfeited before the deadline")
                if tx.recipient != station:
                    problems.append(f"{where}: forfeit paid to {tx.recipient}, not {station}")
            balances[tx.recipient] = balances.get(tx.recipient, 0) + units

        if any(v < 0 for v in balances.values()):
            problems.append(f"{where}: negative balance")
            balances = {k: max(v, 0) for k, v in balances.items()}

    if supply is None:
        problems.append("dump has no genesis transaction")
    else:
        total = sum(balances.values()) + sum(e[0] for e in escrow.values())
        if total != supply:
            problems.append(f"token supply drifted: {total} units vs genesis {supply}")
    return problems
