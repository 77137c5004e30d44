# wsnsim/trace.py
"""What a run leaves behind: event rows, payload fates and the energy ledger."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .core import NodeId, SimTime


class LossCause(str, enum.Enum):
    KMAX_DROP = "kmax_drop"
    RECOVERY_EXHAUSTED = "recovery_exhausted"
    UNREACHABLE = "unreachable"
    CUSTODIAN_DEATH = "custodian_death"
    DISCOVERY_TIMEOUT = "discovery_timeout"
    LINK_FAILURE = "link_failure"


@dataclass(frozen=True, slots=True)
class TraceRow:
    tick: SimTime
    seq: int
    kind: str
    actor: NodeId
    peer: Optional[NodeId] = None
    frame_kind: str = ""
    outcome: str = ""
    energy_debit_j: float = 0.0


@dataclass(slots=True)
class PayloadRecord:
    payload_id: int
    src: NodeId
    dst: NodeId
    created_at: SimTime
    size_bits: int
    delivered_at: Optional[SimTime] = None
    delivered_path: tuple[NodeId, ...] = ()
    copies: int = 0
    lost_cause: Optional[LossCause] = None
    lost_at: Optional[SimTime] = None
    # most recent reason a copy was discarded while others were still alive
    last_cause: Optional[LossCause] = None

    @property
    def delivered(self) -> bool:
        return self.delivered_at is not None

    @property
    def lost(self) -> bool:
        return self.lost_cause is not None


class PayloadLedger:
    """Tracks live copies of every payload so each loss has exactly one cause."""

    def __init__(self):
        self.records: dict[int, PayloadRecord] = {}

    def create(self, payload_id: int, src: NodeId, dst: NodeId, now: SimTime, size_bits: int) -> PayloadRecord:
        rec = PayloadRecord(payload_id, src, dst, now, size_bits)
        self.records[payload_id] = rec
        return rec

    def __getitem__(self, payload_id: int) -> PayloadRecord:
        return self.records[payload_id]

    def acquire(self, payload_id: int) -> None:
        self.records[payload_id].copies += 1

    def release(self, payload_id: int, now: SimTime, cause: Optional[LossCause] = None) -> bool:
        """Drop one copy; returns True when this made the payload lost.

        A hand-over (cause None) that empties the ledger inherits the cause
        under which the last other copy was discarded.
        """
        rec = self.records[payload_id]
        rec.copies = max(0, rec.copies - 1)
        if cause is not None:
            rec.last_cause = cause
        cause = cause or rec.last_cause
        if rec.copies == 0 and not rec.delivered and not rec.lost and cause is not None:
            rec.lost_cause = cause
            rec.lost_at = now
            return True
        return False

    def deliver(self, payload_id: int, now: SimTime, path: tuple[NodeId, ...]) -> bool:
        rec = self.records[payload_id]
        if rec.delivered:
            return False
        rec.delivered_at = now
        rec.delivered_path = path
        return True

    @property
    def generated(self) -> int:
        return len(self.records)

    @property
    def delivered(self) -> list[PayloadRecord]:
        return [r for r in self.records.values() if r.delivered]

    @property
    def lost(self) -> list[PayloadRecord]:
        return [r for r in self.records.values() if r.lost]


class EnergyLedger:
    """Joules debited per node, split by direction and frame category."""

    def __init__(self):
        self.entries: dict[tuple[NodeId, str, str], float] = defaultdict(float)

    def record(self, node: NodeId, direction: str, category: str, joules: float) -> None:
        if joules:
            self.entries[(node, direction, category)] += joules

    def node_total(self, node: NodeId) -> float:
        return sum(v for (n, _, _), v in self.entries.items() if n == node)

    def total(self) -> float:
        return sum(self.entries.values())


@dataclass
class TraceLog:
    protocol: str
    seed: int
    node_count: int
    tick_seconds: float
    sim_time_ticks: int
    end_tick: SimTime = 0
    rows: list[TraceRow] = field(default_factory=list)
    deaths: list[tuple[SimTime, NodeId]] = field(default_factory=list)
    samples: list[tuple[SimTime, float]] = field(default_factory=list)
    payloads: PayloadLedger = field(default_factory=PayloadLedger)
    energy: EnergyLedger = field(default_factory=EnergyLedger)
    initial_energy: dict[NodeId, float] = field(default_factory=dict)
    residual_energy: dict[NodeId, float] = field(default_factory=dict)

    def add(self, row: TraceRow) -> None:
        self.rows.append(row)

    def rows_of(self, kind: str) -> list[TraceRow]:
        return [r for r in self.rows if r.kind == kind]
