# wsnsim/core.py
"""Shared vocabulary for the simulator: identifiers, geometry, frames and paths."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

NodeId = int
SimTime = int  # integer ticks

BROADCAST: NodeId = -1

# distances are compared after rounding to this many decimals (1e-9 m)
DISTANCE_DECIMALS = 9


class SimulationError(Exception):
    """Base class for errors raised by the simulator."""


class NotOnPath(SimulationError):
    def __init__(self, node: NodeId, path: Sequence[NodeId]):
        super().__init__(f"node {node} is not on path {list(path)}")
        self.node = node


class NotInRange(SimulationError):
    def __init__(self, src: NodeId, dst: NodeId):
        super().__init__(f"node {dst} is outside the range of node {src}")
        self.src = src
        self.dst = dst


# --- ENUMS ---
class RadioMode(str, enum.Enum):
    IDLE = "Idle"
    TRANSMITTING = "Transmitting"
    RECEIVING = "Receiving"
    SLEEPING = "Sleeping"


class FrameKind(str, enum.Enum):
    RREQUEST = "RREQUEST"
    ACK1 = "ACK1"
    DATA = "DATA"
    ACK2 = "ACK2"
    ROUTE_RECOVER = "ROUTE_RECOVER"
    DSR_RREQ = "DSR_RREQ"
    DSR_RREP = "DSR_RREP"
    DSR_RERR = "DSR_RERR"

    @property
    def is_control(self) -> bool:
        return self is not FrameKind.DATA


# --- GEOMETRY ---
@dataclass(frozen=True, slots=True)
class Position:
    x: float
    y: float


def distance(a: Position, b: Position) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def rounded_distance(a: Position, b: Position) -> float:
    """Distance rounded to 1e-9 m so that equal-distance ties are reproducible."""
    return round(distance(a, b), DISTANCE_DECIMALS)


# --- NODES ---
@dataclass(slots=True)
class NodeState:
    id: NodeId
    pos: Position
    energy_j: float
    range_m: float
    initial_energy_j: float = 0.0
    interference_count: int = 0
    alive: bool = True
    tx_until: SimTime = 0
    rx_until: SimTime = 0
    sleep_until: SimTime = 0

    def __post_init__(self):
        if not self.initial_energy_j:
            self.initial_energy_j = self.energy_j

    def mode_at(self, now: SimTime) -> RadioMode:
        """Radio mode at `now`; exactly one mode holds at any instant."""
        if now < self.tx_until:
            return RadioMode.TRANSMITTING
        if now < self.sleep_until:
            return RadioMode.SLEEPING
        if now < self.rx_until:
            return RadioMode.RECEIVING
        return RadioMode.IDLE


# --- FRAMES ---


@dataclass(frozen=True, slots=True)
class Frame:
    kind: FrameKind
    src: NodeId
    dst: NodeId
    hop_tx: NodeId
    hop_rx: NodeId
    size_bits: int
    payload_id: int
    seq: int
    energy_report_j: Optional[float] = None
    retry: int = 0
    # tie group addressed by a multi-candidate RREQUEST
    candidates: tuple[NodeId, ...] = ()
    # accumulated / source route (DSR frames, ROUTE_RECOVER failed node)
    route: tuple[NodeId, ...] = ()
    request_id: int = 0

    @property
    def is_broadcast(self) -> bool:
        return self.hop_rx == BROADCAST

    def addressed_to(self, node: NodeId) -> bool:
        return self.is_broadcast or self.hop_rx == node or node in self.candidates


# --- PATHS ---
@dataclass(frozen=True, slots=True)
class Path:
    nodes: tuple[NodeId, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"path repeats a node: {list(self.nodes)}")

    @classmethod
    def of(cls, nodes: Sequence[NodeId]) -> "Path":
        return cls(tuple(nodes))

    @property
    def L(self) -> int:
        return max(0, len(self.nodes) - 1)

    @property
    def source(self) -> NodeId:
        return self.nodes[0]

    @property
    def destination(self) -> NodeId:
        return self.nodes[-1]

    def index(self, node: NodeId) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise NotOnPath(node, self.nodes) from None

    def links(self) -> list[tuple[NodeId, NodeId]]:
        return list(zip(self.nodes, self.nodes[1:]))

    def has_link(self, a: NodeId, b: NodeId) -> bool:
        return (a, b) in self.links() or (b, a) in self.links()

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def hops_between(path: Path, a: NodeId, b: NodeId) -> int:
    return abs(path.index(b) - path.index(a))


# --- PAYLOADS ---
@dataclass(frozen=True, slots=True)
class Payload:
    """One node's copy of an application packet in transit."""

    payload_id: int
    src: NodeId
    dst: NodeId
    created_at: SimTime
    # nodes traversed so far, ending at the current holder
    path: tuple[NodeId, ...] = ()
    excluded: frozenset[NodeId] = frozenset()
    recoveries: int = 0
    reestablished: bool = False
    # route being followed (cached E2XLRADR route or DSR source route)
    route: Optional[tuple[NodeId, ...]] = None

    @property
    def holder(self) -> NodeId:
        return self.path[-1]

    @property
    def upstream(self) -> Optional[NodeId]:
        return self.path[-2] if len(self.path) >= 2 else None
