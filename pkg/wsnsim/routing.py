# wsnsim/routing.py
"""E2XLRADR: farthest-progress forwarding, route maintenance and re-establishment."""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .core import FrameKind, NodeId, NodeState, Path, Payload, Position, SimTime, rounded_distance
from .handshake import DataTimedOut, HandshakeAborted, HopComplete, PayloadArrived
from .protocol import Protocol
from .radio import in_range
from .retry_policy import RetryContext, kmax_for_link, should_drop
from .trace import LossCause

logger = logging.getLogger(__name__)


# --- NEIGHBOUR VIEW ---
@dataclass(frozen=True, slots=True)
class Neighbor:
    id: NodeId
    pos: Position
    last_known_energy_j: float


@dataclass(frozen=True, slots=True)
class NeighborView:
    owner: NodeId
    neighbors: tuple[Neighbor, ...] = ()

    def __contains__(self, node_id: NodeId) -> bool:
        return any(n.id == node_id for n in self.neighbors)

    @property
    def ids(self) -> tuple[NodeId, ...]:
        return tuple(n.id for n in self.neighbors)


def build_view(owner: NodeState, nodes: Sequence[NodeState],
               exclude: frozenset[NodeId] = frozenset()) -> NeighborView:
    """Alive nodes inside the owner's range, minus excluded ones."""
    found = [
        Neighbor(n.id, n.pos, n.energy_j)
        for n in nodes
        if n.id != owner.id and n.alive and n.id not in exclude and in_range(owner, n)
    ]
    found.sort(key=lambda n: n.id)
    return NeighborView(owner.id, tuple(found))


# --- NEXT HOP ---
class NextHopKind(str, enum.Enum):
    DIRECT = "Direct"
    RELAY = "Relay"
    NO_PROGRESS = "NoProgress"


@dataclass(frozen=True, slots=True)
class NextHop:
    kind: NextHopKind
    node: Optional[NodeId] = None
    # every progressing neighbour at the winning distance, when more than one
    ties: tuple[NodeId, ...] = ()

    @classmethod
    def direct(cls, dst: NodeId) -> "NextHop":
        return cls(NextHopKind.DIRECT, dst)

    @classmethod
    def relay(cls, node: NodeId, ties: tuple[NodeId, ...] = ()) -> "NextHop":
        return cls(NextHopKind.RELAY, node, ties)

    @classmethod
    def no_progress(cls) -> "NextHop":
        return cls(NextHopKind.NO_PROGRESS)


def select_next_hop(node: NodeState, dst: NodeId, view: NeighborView, dst_pos: Position) -> NextHop:
    """Farthest neighbour that is strictly closer to dst; energy then id break ties."""
    if dst in view:
        return NextHop.direct(dst)
    here = rounded_distance(node.pos, dst_pos)
    candidates = [nb for nb in view.neighbors if rounded_distance(nb.pos, dst_pos) < here]
    if not candidates:
        return NextHop.no_progress()

    def rank(nb: Neighbor):
        return rounded_distance(node.pos, nb.pos), nb.last_known_energy_j, -nb.id

    best = max(candidates, key=rank)
    reach = rounded_distance(node.pos, best.pos)
    tied = sorted(nb.id for nb in candidates if rounded_distance(node.pos, nb.pos) == reach)
    return NextHop.relay(best.id, tuple(tied) if len(tied) > 1 else ())


def project_path(nodes: Sequence[NodeState], start: NodeId, dst: NodeId,
                 exclude: frozenset[NodeId] = frozenset()) -> tuple[NodeId, ...]:
    """Greedy walk from start toward dst over the current topology.

    Stops at dst or where no neighbour makes progress.
    """
    dst_pos = nodes[dst].pos
    walk = [start]
    current = nodes[start]
    while current.id != dst:
        hop = select_next_hop(current, dst, build_view(current, nodes, exclude), dst_pos)
        if hop.kind is NextHopKind.NO_PROGRESS or hop.node in walk:
            break
        walk.append(hop.node)
        current = nodes[hop.node]
    return tuple(walk)


def kmax_path(nodes: Sequence[NodeState], traversed: Sequence[NodeId], peer: NodeId,
              dst: NodeId, route: Optional[Sequence[NodeId]] = None) -> Path:
    """Path used for Kmax arithmetic on the link holder -> peer."""
    holder = traversed[-1]
    if route is not None and holder in route:
        i = route.index(holder)
        if i + 1 < len(route) and route[i + 1] == peer:
            return Path.of(route)
    hops = [n for n in traversed if n != peer] + [peer]
    if peer != dst:
        hops += [n for n in project_path(nodes, peer, dst)[1:] if n not in hops]
    if dst not in hops:
        # greedy projection stalls in a void; count the last hop anyway
        hops.append(dst)
    return Path.of(hops)


# --- ROUTE CACHE ---
@dataclass(frozen=True, slots=True)
class RouteCacheEntry:
    destination: NodeId
    path: Path
    established_at: SimTime

    def __post_init__(self):
        if self.path.destination != self.destination:
            raise ValueError("cached path must end at its destination")


@dataclass
class _NodeState:
    outbox: deque[Payload] = field(default_factory=deque)
    current: Optional[Payload] = None
    # copies waiting for a ROUTE_RECOVER outcome (custody)
    recovering: dict[int, Payload] = field(default_factory=dict)
    cache: dict[NodeId, RouteCacheEntry] = field(default_factory=dict)


class E2xlradrProtocol(Protocol):
    name = "e2xlradr"
    requires_grant = True
    sleep_bystanders = True
    duty_cycled = True

    def __init__(self):
        super().__init__()
        self.state: dict[NodeId, _NodeState] = {}
        # ROUTE_RECOVER header contents, keyed by (payload, upstream)
        self._recover_headers: dict[tuple[int, NodeId], Payload] = {}

    def attach(self, sim) -> None:
        super().attach(sim)
        self.state = {n.id: _NodeState() for n in sim.nodes}

    # --- queries ---
    def busy(self, node: NodeId) -> bool:
        st = self.state[node]
        return bool(st.outbox or st.current or st.recovering)

    def cached_route(self, source: NodeId, dst: NodeId) -> Optional[RouteCacheEntry]:
        return self.state[source].cache.get(dst)

    def _settled(self, payload_id: int) -> bool:
        rec = self.sim.trace.payloads[payload_id]
        return rec.lost or rec.delivered

    # --- entry points ---
    def on_generate(self, node: NodeId, payload: Payload) -> None:
        self.sim.acquire(payload.payload_id)
        entry = self.cached_route(node, payload.dst)
        if entry is not None:
            payload = replace(payload, route=entry.path.nodes)
        self.state[node].outbox.append(payload)
        self._pump(node)

    def _pump(self, node: NodeId) -> None:
        st = self.state[node]
        if st.current is not None or self.sim.macs[node].sending or not self.sim.alive(node):
            return
        while st.outbox and st.current is None:
            self.forward(node, st.outbox.popleft())

    def forward(self, node: NodeId, payload: Payload) -> None:
        """Start the next hop for a payload this node holds."""
        sim = self.sim
        st = self.state[node]
        me = sim.node(node)
        hop = None
        if payload.route is not None:
            payload, hop = self._follow_route(me, payload)
        if hop is None:
            view = build_view(me, sim.nodes, payload.excluded)
            hop = select_next_hop(me, payload.dst, view, sim.node(payload.dst).pos)
        if hop.kind is NextHopKind.NO_PROGRESS:
            self.route_maintenance(node, payload)
            return
        st.current = payload
        sim.execute(node, sim.macs[node].initiate(sim.now, hop.node, payload.payload_id, hop.ties))

    def _follow_route(self, me: NodeState, payload: Payload) -> tuple[Payload, Optional[NextHop]]:
        sim, sc = self.sim, self.sim.scenario
        route = payload.route
        if me.id not in route or route.index(me.id) + 1 >= len(route):
            return replace(payload, route=None), None
        if me.interference_count > sc.interference_threshold:
            return self._proactive(me, payload, "interference"), None
        if me.energy_j < sc.energy_threshold_fraction * me.initial_energy_j:
            return self._proactive(me, payload, "energy"), None
        nxt = route[route.index(me.id) + 1]
        target = sim.node(nxt)
        if not target.alive or not in_range(me, target) or nxt in payload.excluded:
            self._purge(payload.src, payload.dst)
            return replace(payload, route=None), None
        if nxt == payload.dst:
            return payload, NextHop.direct(nxt)
        return payload, NextHop.relay(nxt)

    def _proactive(self, me: NodeState, payload: Payload, reason: str) -> Payload:
        self._purge(payload.src, payload.dst)
        me.interference_count = 0
        self.sim.note("reestablish", me.id, payload.dst, reason)
        logger.debug("node %d leaves cached route for %d (%s)", me.id, payload.dst, reason)
        return replace(payload, route=None)

    def _purge(self, source: NodeId, dst: NodeId, link: Optional[tuple[NodeId, NodeId]] = None) -> None:
        cache = self.state[source].cache
        entry = cache.get(dst)
        if entry is None:
            return
        if link is None or entry.path.has_link(*link):
            del cache[dst]

    # --- handshake outcomes ---
    def on_mac_action(self, node: NodeId, action) -> None:
        if isinstance(action, PayloadArrived):
            self._on_arrived(node, action)
        elif isinstance(action, HopComplete):
            self._on_hop_complete(node, action)
        elif isinstance(action, HandshakeAborted):
            self._on_aborted(node, action)
        elif isinstance(action, DataTimedOut):
            self._on_data_timeout(node, action)

    def _on_arrived(self, node: NodeId, action: PayloadArrived) -> None:
        sim = self.sim
        pid = action.payload_id
        if self._settled(pid):
            return
        sender = self.state[action.peer].current
        if sender is None or sender.payload_id != pid:
            rec = sim.trace.payloads[pid]
            sender = Payload(pid, rec.src, rec.dst, rec.created_at, path=(action.peer,))
        path = sender.path
        if node in path:
            path = path[:path.index(node)]
        payload = replace(sender, path=path + (node,))
        sim.acquire(pid)
        if node == payload.dst:
            sim.deliver(node, pid, payload.path)
            sim.release(node, pid)
            if payload.src != node:
                self.state[payload.src].cache[node] = RouteCacheEntry(
                    node, Path.of(payload.path), sim.now)
            return
        self.state[node].outbox.append(payload)
        self._pump(node)

    def _on_hop_complete(self, node: NodeId, action: HopComplete) -> None:
        self.state[node].current = None
        self.sim.release(node, action.payload_id)
        self._pump(node)

    def _on_aborted(self, node: NodeId, action: HandshakeAborted) -> None:
        st = self.state[node]
        payload, st.current = st.current, None
        if payload is None:
            return
        self._purge(payload.src, payload.dst, (node, action.peer))
        payload = replace(payload, excluded=payload.excluded | {action.peer}, route=None)
        if payload.recoveries >= self.sim.scenario.recover_depth:
            self.route_reestablish(node, payload)
            return
        self.forward(node, replace(payload, recoveries=payload.recoveries + 1))
        self._pump(node)

    def _on_data_timeout(self, node: NodeId, action: DataTimedOut) -> None:
        sim = self.sim
        st = self.state[node]
        payload = st.current
        if payload is None:
            sim.macs[node].abandon()
            return
        path = kmax_path(sim.nodes, payload.path, action.peer, payload.dst, payload.route)
        ctx = RetryContext(path, path.index(node), action.retry_count)
        if should_drop(ctx, sim.scenario.kmax_policy):
            logger.debug("node %d drops payload %d after %d retries (kmax %d)", node,
                         payload.payload_id, action.retry_count,
                         kmax_for_link(ctx, sim.scenario.kmax_policy))
            sim.macs[node].abandon()
            st.current = None
            self._purge(payload.src, payload.dst, (node, action.peer))
            sim.release(node, payload.payload_id, LossCause.KMAX_DROP)
            self._pump(node)
            return
        sim.execute(node, sim.macs[node].retransmit_data(sim.now))

    # --- maintenance ---
    def route_maintenance(self, node: NodeId, payload: Payload) -> None:
        """No usable next hop: hand the payload back to the previous hop."""
        sim = self.sim
        st = self.state[node]
        upstream = payload.upstream
        if upstream is None or payload.recoveries >= sim.scenario.recover_depth:
            self.route_reestablish(node, payload)
            return
        st.current = None
        payload = replace(payload, recoveries=payload.recoveries + 1)
        st.recovering[payload.payload_id] = payload
        self._recover_headers[(payload.payload_id, upstream)] = payload
        logger.debug("node %d sends ROUTE_RECOVER for payload %d to %d", node,
                     payload.payload_id, upstream)
        self.send_reliable(node, FrameKind.ROUTE_RECOVER, upstream, payload.payload_id,
                           src=payload.src, dst=payload.dst, route=payload.path,
                           limit=sim.scenario.max_rrequest_retries)

    def on_frame(self, node: NodeId, frame) -> None:
        if frame.kind is not FrameKind.ROUTE_RECOVER:
            return
        header = self._recover_headers.pop((frame.payload_id, node), None)
        if header is None or self._settled(frame.payload_id):
            return
        path = header.path
        path = path[:path.index(node) + 1] if node in path else (node,)
        payload = replace(header, path=path, excluded=header.excluded | {frame.hop_tx}, route=None)
        self._purge(payload.src, payload.dst, (node, frame.hop_tx))
        self.sim.acquire(frame.payload_id)
        self.state[node].outbox.appendleft(payload)
        self._pump(node)

    def on_control_result(self, node: NodeId, frame, delivered: bool) -> None:
        if frame.kind is not FrameKind.ROUTE_RECOVER:
            return
        self._recover_headers.pop((frame.payload_id, frame.hop_rx), None)
        self.state[node].recovering.pop(frame.payload_id, None)
        self.sim.release(node, frame.payload_id, None if delivered else LossCause.RECOVERY_EXHAUSTED)
        self._pump(node)

    def route_reestablish(self, node: NodeId, payload: Payload) -> None:
        """Restart the payload from its source with the cache entry dropped."""
        sim = self.sim
        st = self.state[node]
        if st.current is not None and st.current.payload_id == payload.payload_id:
            st.current = None
        source = payload.src
        if payload.reestablished or not sim.alive(source):
            sim.release(node, payload.payload_id, LossCause.UNREACHABLE)
            self._pump(node)
            return
        self._purge(source, payload.dst)
        sim.note("reestablish", source, payload.dst, "escalated")
        logger.debug("payload %d re-established from source %d", payload.payload_id, source)
        fresh = Payload(payload.payload_id, source, payload.dst, payload.created_at,
                        path=(source,), excluded=payload.excluded, reestablished=True)
        sim.acquire(payload.payload_id)
        self.state[source].outbox.appendleft(fresh)
        sim.release(node, payload.payload_id)
        self._pump(source)
        if node != source:
            self._pump(node)

    def on_death(self, node: NodeId) -> None:
        st = self.state[node]
        held = list(st.outbox) + ([st.current] if st.current else []) + list(st.recovering.values())
        st.outbox.clear()
        st.current = None
        st.recovering.clear()
        for payload in held:
            self.sim.release(node, payload.payload_id, LossCause.CUSTODIAN_DEATH)
