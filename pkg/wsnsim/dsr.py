# wsnsim/dsr.py
"""Simplified Dynamic Source Routing, the comparison baseline.

Flooded route requests with duplicate suppression, replies along the reversed
accumulated route, source-routed DATA with a fixed per-hop retry limit, and
route errors that purge the broken link and trigger one rediscovery.
"""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import BROADCAST, Frame, FrameKind, NodeId, Path, Payload, SimTime
from .handshake import DataTimedOut, HopComplete, PayloadArrived
from .protocol import Protocol
from .trace import LossCause

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class CachedRoute:
    path: Path
    discovered_at: SimTime


class DsrRouteCache:
    """Source routes known to one node, per destination."""

    def __init__(self):
        self.routes: dict[NodeId, list[CachedRoute]] = defaultdict(list)

    def add(self, path: Path, now: SimTime) -> None:
        known = self.routes[path.destination]
        if any(r.path == path for r in known):
            return
        known.append(CachedRoute(path, now))

    def best(self, dst: NodeId) -> Optional[Path]:
        known = self.routes.get(dst)
        if not known:
            return None
        return min(known, key=lambda r: (r.path.L, r.discovered_at, r.path.nodes)).path

    def purge_link(self, a: NodeId, b: NodeId) -> int:
        removed = 0
        for dst in list(self.routes):
            keep = [r for r in self.routes[dst] if not r.path.has_link(a, b)]
            removed += len(self.routes[dst]) - len(keep)
            if keep:
                self.routes[dst] = keep
            else:
                del self.routes[dst]
        return removed

    def __contains__(self, dst: NodeId) -> bool:
        return bool(self.routes.get(dst))


@dataclass
class _DsrNode:
    cache: DsrRouteCache = field(default_factory=DsrRouteCache)
    outbox: deque[Payload] = field(default_factory=deque)
    current: Optional[Payload] = None
    waiting: dict[NodeId, list[Payload]] = field(default_factory=dict)
    # destination -> request id of the discovery in progress
    discovering: dict[NodeId, int] = field(default_factory=dict)
    seen: set[tuple[NodeId, int]] = field(default_factory=set)
    # copies held while a DSR_RERR carries them upstream
    erring: dict[int, Payload] = field(default_factory=dict)
    request_ids: itertools.count = field(default_factory=lambda: itertools.count(1))


class DsrProtocol(Protocol):
    name = "dsr"
    requires_grant = False
    sleep_bystanders = False
    duty_cycled = False

    def __init__(self):
        super().__init__()
        self.state: dict[NodeId, _DsrNode] = {}
        self._rerr_headers: dict[tuple[int, NodeId], Payload] = {}

    def attach(self, sim) -> None:
        super().attach(sim)
        self.state = {n.id: _DsrNode() for n in sim.nodes}

    def busy(self, node: NodeId) -> bool:
        st = self.state[node]
        return bool(st.outbox or st.current or st.erring)

    # --- origination ---
    def on_generate(self, node: NodeId, payload: Payload) -> None:
        self.sim.acquire(payload.payload_id)
        self._route(node, payload)

    def _route(self, node: NodeId, payload: Payload) -> None:
        st = self.state[node]
        path = st.cache.best(payload.dst)
        if path is not None:
            st.outbox.append(replace(payload, route=path.nodes, path=(node,)))
            self.source_route_forward(node)
            return
        st.waiting.setdefault(payload.dst, []).append(payload)
        if payload.dst not in st.discovering:
            self.discover(node, payload.dst)

    def discover(self, source: NodeId, dst: NodeId) -> int:
        """Flood a route request for dst; returns its request id."""
        sim = self.sim
        st = self.state[source]
        rid = next(st.request_ids)
        st.discovering[dst] = rid
        st.seen.add((source, rid))
        sim.transmit(source, FrameKind.DSR_RREQ, BROADCAST, 0, src=source, dst=dst,
                     route=(source,), request_id=rid)
        sim.schedule_protocol_timer(source, sim.scenario.dsr_discovery_timeout, ("discovery", dst, rid))
        logger.debug("node %d starts discovery %d for %d", source, rid, dst)
        return rid

    def on_protocol_timer(self, node: NodeId, data) -> None:
        _, dst, rid = data
        st = self.state[node]
        if st.discovering.get(dst) != rid:
            return
        del st.discovering[dst]
        for payload in st.waiting.pop(dst, []):
            self.sim.release(node, payload.payload_id, LossCause.DISCOVERY_TIMEOUT)

    # --- control frames ---
    def on_frame(self, node: NodeId, frame: Frame) -> None:
        if frame.kind is FrameKind.DSR_RREQ:
            self._on_rreq(node, frame)
        elif frame.kind is FrameKind.DSR_RREP:
            self._on_rrep(node, frame)
        elif frame.kind is FrameKind.DSR_RERR:
            self._on_rerr(node, frame)

    def _on_rreq(self, node: NodeId, frame: Frame) -> None:
        sim = self.sim
        st = self.state[node]
        key = (frame.src, frame.request_id)
        if key in st.seen or node in frame.route:
            return
        st.seen.add(key)
        route = frame.route + (node,)
        if node == frame.dst:
            self.send_reliable(node, FrameKind.DSR_RREP, route[-2], 0, src=frame.src, dst=node,
                               route=route, limit=sim.scenario.dsr_retry_limit)
            return
        jitter = int(sim.rng.tiebreak.integers(0, sim.scenario.dsr_jitter_ticks + 1))
        sim.transmit(node, FrameKind.DSR_RREQ, BROADCAST, 0, src=frame.src, dst=frame.dst,
                     route=route, request_id=frame.request_id, delay=jitter)

    def _on_rrep(self, node: NodeId, frame: Frame) -> None:
        route = frame.route
        if node not in route:
            return
        i = route.index(node)
        if i > 0:
            self.send_reliable(node, FrameKind.DSR_RREP, route[i - 1], 0, src=frame.src,
                               dst=frame.dst, route=route, limit=self.sim.scenario.dsr_retry_limit)
            return
        st = self.state[node]
        dst = route[-1]
        st.cache.add(Path.of(route), self.sim.now)
        st.discovering.pop(dst, None)
        for payload in st.waiting.pop(dst, []):
            self._route(node, payload)

    # --- data ---
    def source_route_forward(self, node: NodeId) -> None:
        """Send the next queued payload one hop along its source route (DATA/ACK2 only)."""
        sim = self.sim
        st = self.state[node]
        if st.current is not None or sim.macs[node].sending or not sim.alive(node) or not st.outbox:
            return
        payload = st.outbox.popleft()
        route = payload.route
        nxt = route[route.index(node) + 1]
        st.current = payload
        sim.execute(node, sim.macs[node].start_data(sim.now, nxt, payload.payload_id))

    def on_mac_action(self, node: NodeId, action) -> None:
        if isinstance(action, PayloadArrived):
            self._on_arrived(node, action)
        elif isinstance(action, HopComplete):
            st = self.state[node]
            st.current = None
            self.sim.release(node, action.payload_id)
            self.source_route_forward(node)
        elif isinstance(action, DataTimedOut):
            self._on_data_timeout(node, action)

    def _on_arrived(self, node: NodeId, action: PayloadArrived) -> None:
        sim = self.sim
        pid = action.payload_id
        rec = sim.trace.payloads[pid]
        if rec.lost or rec.delivered:
            return
        header = self.state[action.peer].current
        if header is None or header.payload_id != pid or header.route is None:
            return
        payload = replace(header, path=header.path + (node,))
        sim.acquire(pid)
        if node == payload.dst:
            sim.deliver(node, pid, payload.path)
            sim.release(node, pid)
            return
        self.state[node].outbox.append(payload)
        self.source_route_forward(node)

    def _on_data_timeout(self, node: NodeId, action: DataTimedOut) -> None:
        sim = self.sim
        mac = sim.macs[node]
        if action.retry_count < sim.scenario.dsr_retry_limit:
            sim.execute(node, mac.retransmit_data(sim.now))
            return
        mac.abandon()
        st = self.state[node]
        payload, st.current = st.current, None
        st.cache.purge_link(node, action.peer)
        if payload is None:
            return
        logger.debug("link %d->%d failed for payload %d", node, action.peer, payload.payload_id)
        if node == payload.src:
            self._link_failed_at_source(node, payload)
        else:
            self._send_rerr(node, payload, (node, action.peer))
        self.source_route_forward(node)

    def _send_rerr(self, node: NodeId, payload: Payload, link: tuple[NodeId, NodeId]) -> None:
        route = payload.route
        upstream = route[route.index(node) - 1]
        self.state[node].erring[payload.payload_id] = payload
        self._rerr_headers[(payload.payload_id, upstream)] = payload
        self.send_reliable(node, FrameKind.DSR_RERR, upstream, payload.payload_id, src=payload.src,
                           dst=payload.dst, route=link, limit=self.sim.scenario.dsr_retry_limit)

    def _on_rerr(self, node: NodeId, frame: Frame) -> None:
        st = self.state[node]
        st.cache.purge_link(*frame.route)
        header = self._rerr_headers.pop((frame.payload_id, node), None)
        rec = self.sim.trace.payloads[frame.payload_id]
        if header is None or rec.lost or rec.delivered:
            return
        self.sim.acquire(frame.payload_id)
        if node == header.src:
            self._link_failed_at_source(node, header)
        else:
            self._send_rerr(node, header, frame.route)

    def on_control_result(self, node: NodeId, frame: Frame, delivered: bool) -> None:
        if frame.kind is not FrameKind.DSR_RERR:
            return
        self._rerr_headers.pop((frame.payload_id, frame.hop_rx), None)
        self.state[node].erring.pop(frame.payload_id, None)
        self.sim.release(node, frame.payload_id, None if delivered else LossCause.LINK_FAILURE)
        self.source_route_forward(node)

    def _link_failed_at_source(self, source: NodeId, payload: Payload) -> None:
        if payload.reestablished:
            self.sim.release(source, payload.payload_id, LossCause.LINK_FAILURE)
            return
        self._route(source, replace(payload, path=(source,), route=None, reestablished=True))

    def on_death(self, node: NodeId) -> None:
        st = self.state[node]
        held = list(st.outbox) + ([st.current] if st.current else []) + list(st.erring.values())
        for waiting in st.waiting.values():
            held.extend(waiting)
        st.outbox.clear()
        st.current = None
        st.erring.clear()
        st.waiting.clear()
        st.discovering.clear()
        for payload in held:
            self.sim.release(node, payload.payload_id, LossCause.CUSTODIAN_DEATH)
