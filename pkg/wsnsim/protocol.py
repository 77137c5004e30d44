# wsnsim/protocol.py
"""Interface every routing protocol implements on top of the shared engine."""

from __future__ import annotations

import abc
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Optional

from .core import Frame, FrameKind, NodeId, Payload

if TYPE_CHECKING:
    from .engine import Simulator
    from .handshake import Action

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class _ReliableSend:
    node: NodeId
    kind: FrameKind
    hop_rx: NodeId
    payload_id: int
    src: NodeId
    dst: NodeId
    route: tuple[NodeId, ...]
    limit: int
    attempt: int


class Protocol(abc.ABC):
    """A routing strategy. The engine owns the channel, the clock and the ledgers."""

    name: str = ""
    # DATA accepted only after an r-request grant
    requires_grant: bool = True
    # bystanders may sleep through a DATA/ACK2 exchange
    sleep_bystanders: bool = True
    # idle radios follow a listen schedule and wake on demand to send
    duty_cycled: bool = True

    def __init__(self):
        self.sim: Optional["Simulator"] = None
        self._reliable: dict[int, _ReliableSend] = {}

    def attach(self, sim: "Simulator") -> None:
        self.sim = sim

    @abc.abstractmethod
    def on_generate(self, node: NodeId, payload: Payload) -> None:
        ...

    @abc.abstractmethod
    def on_mac_action(self, node: NodeId, action: "Action") -> None:
        ...

    def on_frame(self, node: NodeId, frame: Frame) -> None:
        """A non-handshake frame was delivered to `node`."""

    def on_death(self, node: NodeId) -> None:
        ...

    def busy(self, node: NodeId) -> bool:
        return False

    def on_control_result(self, node: NodeId, frame: Frame, delivered: bool) -> None:
        """Final outcome of a frame sent with send_reliable()."""

    def on_protocol_timer(self, node: NodeId, data: Any) -> None:
        ...

    # --- control frames with sender notification ---
    def send_reliable(self, node: NodeId, kind: FrameKind, hop_rx: NodeId, payload_id: int, *,
                      src: NodeId, dst: NodeId, route: tuple[NodeId, ...] = (),
                      limit: int, attempt: int = 0) -> Frame:
        frame = self.sim.transmit(node, kind, hop_rx, payload_id, src=src, dst=dst,
                                  route=route, retry=attempt)
        self._reliable[frame.seq] = _ReliableSend(node, kind, hop_rx, payload_id, src, dst,
                                                  tuple(route), limit, attempt)
        return frame

    def on_control_outcome(self, node: NodeId, frame: Frame, delivered: bool) -> None:
        pending = self._reliable.pop(frame.seq, None)
        if pending is None:
            return
        if delivered or pending.attempt >= pending.limit:
            self.on_control_result(node, frame, delivered)
            return
        self.sim.schedule_protocol_timer(node, self.sim.scenario.tf, ("resend", pending))

    def on_timer(self, node: NodeId, data: Any) -> None:
        if isinstance(data, tuple) and data and data[0] == "resend":
            p: _ReliableSend = data[1]
            self.send_reliable(p.node, p.kind, p.hop_rx, p.payload_id, src=p.src, dst=p.dst,
                               route=p.route, limit=p.limit, attempt=p.attempt + 1)
            return
        self.on_protocol_timer(node, data)
