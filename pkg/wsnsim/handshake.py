# wsnsim/handshake.py
"""Per-hop r-request / ack1 / data / ack2 exchange.

The machine never touches the channel itself. Every method returns a list of
actions which the engine carries out (put a frame on the air, arm a timer,
tell routing what happened). That keeps each node's state machine a plain
object that can be driven frame by frame in tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .core import Frame, FrameKind, NodeId, NodeState, SimTime
from .radio import in_range


class Phase(str, enum.Enum):
    IDLE = "Idle"
    AWAIT_ACK1 = "AwaitAck1"
    AWAIT_ACK2 = "AwaitAck2"
    AWAIT_DATA = "AwaitData"


# --- ACTIONS ---
@dataclass(frozen=True, slots=True)
class Emit:
    kind: FrameKind
    hop_rx: NodeId
    payload_id: int
    delay: int = 0
    retry: int = 0
    candidates: tuple[NodeId, ...] = ()
    energy_report_j: Optional[float] = None


@dataclass(frozen=True, slots=True)
class ArmTimer:
    deadline: SimTime
    token: int


@dataclass(frozen=True, slots=True)
class BeginData:
    """DATA is about to go out; bystanders may sleep."""
    peer: NodeId
    payload_id: int


@dataclass(frozen=True, slots=True)
class HopComplete:
    payload_id: int
    peer: NodeId


@dataclass(frozen=True, slots=True)
class PayloadArrived:
    payload_id: int
    peer: NodeId


@dataclass(frozen=True, slots=True)
class HandshakeAborted:
    payload_id: int
    peer: NodeId


@dataclass(frozen=True, slots=True)
class DataTimedOut:
    payload_id: int
    peer: NodeId
    retry_count: int


Action = Union[Emit, ArmTimer, BeginData, HopComplete, PayloadArrived, HandshakeAborted, DataTimedOut]


@dataclass(slots=True)
class HandshakeState:
    phase: Phase = Phase.IDLE
    peer: Optional[NodeId] = None
    payload_id: Optional[int] = None
    timer_deadline: Optional[SimTime] = None
    rrequest_retries: int = 0
    data_retries: int = 0
    candidates: tuple[NodeId, ...] = ()
    tie_reports: dict[NodeId, float] = field(default_factory=dict)
    timer_token: int = 0

    @property
    def timer_armed(self) -> bool:
        return self.timer_deadline is not None


class Handshake:
    """Sender and receiver roles of one node."""

    def __init__(self, node_id: NodeId, tf_ticks: int, max_rrequest_retries: int, control_airtime: int = 1):
        self.node_id = node_id
        self.tf = tf_ticks
        self.max_rrequest_retries = max_rrequest_retries
        self.control_airtime = control_airtime
        self.state = HandshakeState()
        # receive side: (peer, payload) -> grant expiry
        self.grants: dict[tuple[NodeId, int], SimTime] = {}
        # DATA already handed on: (peer, payload) -> when the duplicate window closes
        self.accepted: dict[tuple[NodeId, int], SimTime] = {}

    # --- queries ---
    @property
    def sending(self) -> bool:
        return self.state.phase is not Phase.IDLE

    def receiving_phase(self, now: SimTime) -> bool:
        self._prune(now)
        return bool(self.grants)

    def phase(self, now: SimTime) -> Phase:
        if self.sending:
            return self.state.phase
        return Phase.AWAIT_DATA if self.receiving_phase(now) else Phase.IDLE

    def ready_for(self, peer: NodeId, now: SimTime) -> bool:
        if self.sending:
            return False
        self._prune(now)
        return all(p == peer for p, _ in self.grants)

    # --- sender side ---
    def initiate(self, now: SimTime, next_hop: NodeId, payload_id: int,
                 candidates: Iterable[NodeId] = ()) -> list[Action]:
        if self.sending:
            raise RuntimeError(f"node {self.node_id} already has a handshake in progress")
        group = tuple(candidates) or (next_hop,)
        self.state = HandshakeState(
            phase=Phase.AWAIT_ACK1,
            peer=next_hop,
            payload_id=payload_id,
            candidates=group if len(group) > 1 else (),
            timer_token=self.state.timer_token,
        )
        return [self._rrequest(), self._arm(now)]

    def start_data(self, now: SimTime, next_hop: NodeId, payload_id: int) -> list[Action]:
        """Plain DATA/ACK2 exchange without the r-request phase."""
        if self.sending:
            raise RuntimeError(f"node {self.node_id} already has a handshake in progress")
        self.state = HandshakeState(payload_id=payload_id, timer_token=self.state.timer_token)
        return self._go_data(now, next_hop, begin_sleep=False)

    def on_ack1(self, now: SimTime, frame: Frame) -> list[Action]:
        st = self.state
        if st.phase is not Phase.AWAIT_ACK1 or frame.payload_id != st.payload_id:
            return []
        group = st.candidates or (st.peer,)
        if frame.hop_tx not in group:
            return []
        if not st.candidates:
            return self._go_data(now, frame.hop_tx)
        st.tie_reports[frame.hop_tx] = frame.energy_report_j or 0.0
        if len(st.tie_reports) == len(st.candidates):
            return self._go_data(now, self._best_reporter())
        return []

    def on_ack2(self, now: SimTime, frame: Frame) -> list[Action]:
        st = self.state
        if (st.phase is not Phase.AWAIT_ACK2 or frame.hop_tx != st.peer
                or frame.payload_id != st.payload_id):
            return []
        done = HopComplete(st.payload_id, st.peer)
        self._idle()
        return [done]

    def on_timeout(self, now: SimTime, token: int) -> list[Action]:
        st = self.state
        if token != st.timer_token or not st.timer_armed:
            return []
        st.timer_deadline = None
        if st.phase is Phase.AWAIT_ACK1:
            if st.tie_reports:
                return self._go_data(now, self._best_reporter())
            if st.rrequest_retries >= self.max_rrequest_retries:
                aborted = HandshakeAborted(st.payload_id, st.peer)
                self._idle()
                return [aborted]
            st.rrequest_retries += 1
            return [self._rrequest(), self._arm(now)]
        if st.phase is Phase.AWAIT_ACK2:
            # routing answers with retransmit_data() or abandon()
            return [DataTimedOut(st.payload_id, st.peer, st.data_retries)]
        return []

    def retransmit_data(self, now: SimTime) -> list[Action]:
        st = self.state
        if st.phase is not Phase.AWAIT_ACK2:
            return []
        st.data_retries += 1
        return [Emit(FrameKind.DATA, st.peer, st.payload_id, retry=st.data_retries), self._arm(now)]

    def abandon(self) -> None:
        self._idle()

    # --- receiver side ---
    def on_rrequest(self, now: SimTime, frame: Frame, radio_idle: bool, energy_j: float) -> list[Action]:
        if not radio_idle or not self.ready_for(frame.hop_tx, now):
            return []
        rank = frame.candidates.index(self.node_id) if self.node_id in frame.candidates else 0
        self.grants[(frame.hop_tx, frame.payload_id)] = now + self.tf
        return [Emit(FrameKind.ACK1, frame.hop_tx, frame.payload_id,
                     delay=rank * self.control_airtime, energy_report_j=energy_j)]

    def on_data(self, now: SimTime, frame: Frame, require_grant: bool = True) -> list[Action]:
        key = (frame.hop_tx, frame.payload_id)
        ack = Emit(FrameKind.ACK2, frame.hop_tx, frame.payload_id)
        self._forget_accepted(now)
        granted = key in self.grants
        if key in self.accepted and not granted:
            # our ACK2 was lost; confirm again without handing the payload on twice
            self.accepted[key] = now + 2 * self.tf
            return [ack]
        if require_grant and not granted:
            return []
        self.grants.pop(key, None)
        self.accepted[key] = now + 2 * self.tf
        return [ack, PayloadArrived(frame.payload_id, frame.hop_tx)]

    def reset(self) -> None:
        self._idle()
        self.grants.clear()
        self.accepted.clear()

    # --- internals ---
    def _rrequest(self) -> Emit:
        st = self.state
        return Emit(FrameKind.RREQUEST, st.peer, st.payload_id,
                    retry=st.rrequest_retries, candidates=st.candidates)

    def _arm(self, now: SimTime) -> ArmTimer:
        self.state.timer_token += 1
        self.state.timer_deadline = now + self.tf
        return ArmTimer(self.state.timer_deadline, self.state.timer_token)

    def _go_data(self, now: SimTime, peer: NodeId, begin_sleep: bool = True) -> list[Action]:
        st = self.state
        st.phase = Phase.AWAIT_ACK2
        st.peer = peer
        st.data_retries = 0
        st.candidates = ()
        st.tie_reports = {}
        actions: list[Action] = [Emit(FrameKind.DATA, peer, st.payload_id)]
        if begin_sleep:
            actions.append(BeginData(peer, st.payload_id))
        actions.append(self._arm(now))
        return actions

    def _best_reporter(self) -> NodeId:
        return max(self.state.tie_reports.items(), key=lambda kv: (kv[1], -kv[0]))[0]

    def _idle(self) -> None:
        token = self.state.timer_token + 1
        self.state = HandshakeState(timer_token=token)

    def _prune(self, now: SimTime) -> None:
        expired = [k for k, until in self.grants.items() if until <= now]
        for k in expired:
            del self.grants[k]
        self._forget_accepted(now)

    def _forget_accepted(self, now: SimTime) -> None:
        for k in [k for k, until in self.accepted.items() if until <= now]:
            del self.accepted[k]


def schedule_neighbor_sleep(
    now: SimTime,
    tx: NodeState,
    rx: NodeState,
    bystanders: Iterable[NodeState],
    duration: int,
    has_pending: Iterable[NodeId] = (),
) -> dict[NodeId, SimTime]:
    """Sleep deadlines for bystanders that can hear either side of a DATA exchange."""
    pending = set(has_pending)
    until = now + duration
    schedule: dict[NodeId, SimTime] = {}
    for node in bystanders:
        if node.id in (tx.id, rx.id) or not node.alive or node.id in pending:
            continue
        if in_range(tx, node) or in_range(rx, node):
            schedule[node.id] = until
    return schedule
