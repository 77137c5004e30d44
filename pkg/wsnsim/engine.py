# wsnsim/engine.py
"""Deterministic discrete-event core shared by both routing protocols."""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .config import ProtocolName, Scenario
from .core import BROADCAST, Frame, FrameKind, NodeId, NodeState, Payload, RadioMode, SimTime
from .handshake import (
    Action,
    ArmTimer,
    BeginData,
    Emit,
    Handshake,
    schedule_neighbor_sleep,
)
from .protocol import Protocol
from .radio import (
    DutyCycle,
    ReceptionOutcome,
    Transmission,
    debit,
    reaches,
    resolve_reception,
    rx_energy,
    tx_energy,
    tx_power_w,
)
from .topology import (
    MobilityModel,
    RngStream,
    ScriptedLayout,
    generate_traffic,
    place_nodes,
    place_scripted,
    scripted_traffic,
    source_ids,
)
from .trace import LossCause, TraceLog, TraceRow

logger = logging.getLogger(__name__)

# control frames whose sender learns whether they arrived
RELIABLE_KINDS = frozenset({FrameKind.ROUTE_RECOVER, FrameKind.DSR_RREP, FrameKind.DSR_RERR})


class EventKind(str, enum.Enum):
    FRAME_ARRIVAL = "FrameArrival"
    TIMER_FIRE = "TimerFire"
    PACKET_GENERATION = "PacketGeneration"
    MOBILITY_STEP = "MobilityStep"
    METRICS_SAMPLE = "MetricsSample"
    TX_START = "TxStart"
    PROTOCOL_TIMER = "ProtocolTimer"
    NODE_FAILURE = "NodeFailure"
    ENERGY_DEPLETION = "EnergyDepletion"


# still processed once every source is dead
DRAIN_KINDS = frozenset({EventKind.ENERGY_DEPLETION, EventKind.NODE_FAILURE,
                         EventKind.METRICS_SAMPLE})


@dataclass(order=True, frozen=True, slots=True)
class Event:
    at: SimTime
    seq: int
    kind: EventKind = field(compare=False)
    actor: NodeId = field(compare=False, default=BROADCAST)
    data: Any = field(compare=False, default=None)


@dataclass(frozen=True, slots=True)
class _OnAir:
    tx: Transmission
    receivers: tuple[NodeId, ...]
    # in range but asleep on their listen schedule when the frame began
    dozing: frozenset[NodeId] = frozenset()


def make_protocol(name: ProtocolName) -> Protocol:
    from .dsr import DsrProtocol
    from .routing import E2xlradrProtocol

    if name is ProtocolName.DSR:
        return DsrProtocol()
    return E2xlradrProtocol()


class Simulator:
    """One run: nodes, channel, clock and ledgers. Protocol logic is plugged in."""

    def __init__(self, scenario: Scenario, protocol: Optional[Protocol] = None,
                 layout: Optional[ScriptedLayout] = None):
        self.scenario = scenario
        self.rng = RngStream(scenario.seed)
        if layout is not None:
            self.nodes: list[NodeState] = place_scripted(scenario, layout)
            self.sources: list[NodeId] = list(layout.sources)
            self.generations = scripted_traffic(layout)
            self.failures = sorted(layout.failures)
        else:
            self.nodes = place_nodes(scenario, self.rng)
            self.sources = source_ids(scenario)
            self.generations = generate_traffic(scenario, self.rng, self.sources)
            self.failures = []
        self.mobility = MobilityModel(scenario, self.rng)
        self.model = scenario.energy_model
        self.macs = [
            Handshake(n.id, scenario.tf, scenario.max_rrequest_retries, scenario.control_airtime)
            for n in self.nodes
        ]
        self.protocol = protocol or make_protocol(scenario.protocol)
        self._listen_j = scenario.listen_j_per_tick if scenario.idle_listening else 0.0
        # listening energy is charged up to this tick
        self._settled: dict[NodeId, SimTime] = {n.id: 0 for n in self.nodes}
        # kept awake off-schedule until this tick after an own transmission
        self._awake_until: dict[NodeId, SimTime] = {n.id: 0 for n in self.nodes}
        self._depletion_at: dict[NodeId, Optional[SimTime]] = {n.id: None for n in self.nodes}
        self._duty: dict[NodeId, Optional[DutyCycle]] = {n.id: None for n in self.nodes}
        if scenario.duty_cycle and self.protocol.duty_cycled:
            offsets = self.rng.duty.integers(0, scenario.duty_period_ticks, size=len(self.nodes))
            self._duty = {
                n.id: DutyCycle(scenario.duty_period_ticks, scenario.duty_awake_ticks,
                                int(offsets[n.id]))
                for n in self.nodes
            }
        self.trace = TraceLog(
            protocol=self.protocol.name,
            seed=scenario.seed,
            node_count=len(self.nodes),
            tick_seconds=scenario.tick_seconds,
            sim_time_ticks=scenario.sim_time_ticks,
        )
        self.trace.initial_energy = {n.id: n.energy_j for n in self.nodes}

        self.now: SimTime = 0
        self._queue: list[Event] = []
        self._seq = itertools.count(1)
        self._current_seq = 0
        self._payload_ids = itertools.count(1)
        self._stopped = False
        # every source is dead; only idle drain and sampling go on
        self._draining = False
        self._max_air = max(scenario.data_airtime, scenario.control_airtime)
        self._incoming: dict[NodeId, list[Transmission]] = defaultdict(list)
        # own transmissions and sleep periods; a node receives nothing during these
        self._busy: dict[NodeId, list[tuple[SimTime, SimTime]]] = defaultdict(list)
        self._txq: dict[NodeId, deque[Frame]] = defaultdict(deque)
        self._handlers = {
            EventKind.FRAME_ARRIVAL: self._on_frame_arrival,
            EventKind.TIMER_FIRE: self._on_timer,
            EventKind.PACKET_GENERATION: self._on_generation,
            EventKind.MOBILITY_STEP: self._on_mobility,
            EventKind.METRICS_SAMPLE: self._on_sample,
            EventKind.TX_START: self._on_tx_start,
            EventKind.PROTOCOL_TIMER: self._on_protocol_timer,
            EventKind.NODE_FAILURE: self._on_failure,
            EventKind.ENERGY_DEPLETION: self._on_depletion,
        }
        self.protocol.attach(self)

    # --- scheduling ---
    def next_seq(self) -> int:
        return next(self._seq)

    def schedule(self, at: SimTime, kind: EventKind, actor: NodeId = BROADCAST, data: Any = None) -> Event:
        if at < self.now:
            raise ValueError(f"cannot schedule {kind.value} at {at}, clock is at {self.now}")
        ev = Event(at, self.next_seq(), kind, actor, data)
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_protocol_timer(self, node: NodeId, delay: int, data: Any) -> Event:
        return self.schedule(self.now + delay, EventKind.PROTOCOL_TIMER, node, data)

    # --- queries used by protocols ---
    def node(self, node_id: NodeId) -> NodeState:
        return self.nodes[node_id]

    def alive(self, node_id: NodeId) -> bool:
        return self.nodes[node_id].alive

    def alive_fraction(self) -> float:
        return sum(n.alive for n in self.nodes) / len(self.nodes)

    def has_pending(self, node_id: NodeId) -> bool:
        mac = self.macs[node_id]
        return (bool(self._txq[node_id]) or mac.sending or mac.receiving_phase(self.now)
                or self.protocol.busy(node_id))

    def new_payload(self, src: NodeId, dst: NodeId) -> Payload:
        pid = next(self._payload_ids)
        self.trace.payloads.create(pid, src, dst, self.now, self.scenario.packet_size_bits)
        return Payload(pid, src, dst, self.now, path=(src,))

    # --- payload custody ---
    def acquire(self, payload_id: int) -> None:
        self.trace.payloads.acquire(payload_id)

    def release(self, node: NodeId, payload_id: int, cause: Optional[LossCause] = None) -> bool:
        lost = self.trace.payloads.release(payload_id, self.now, cause)
        if lost:
            why = self.trace.payloads[payload_id].lost_cause.value
            self.record(TraceRow(self.now, self._current_seq, "loss", node,
                                 frame_kind=FrameKind.DATA.value, outcome=why))
            logger.debug("payload %d lost at node %d: %s", payload_id, node, why)
        return lost

    def deliver(self, node: NodeId, payload_id: int, path: tuple[NodeId, ...]) -> bool:
        first = self.trace.payloads.deliver(payload_id, self.now, path)
        if first:
            rec = self.trace.payloads[payload_id]
            self.record(TraceRow(self.now, self._current_seq, "deliver", node, rec.src,
                                 FrameKind.DATA.value, "ok"))
        return first

    def record(self, row: TraceRow) -> None:
        self.trace.add(row)

    def note(self, kind: str, actor: NodeId, peer: Optional[NodeId] = None, outcome: str = "") -> None:
        self.record(TraceRow(self.now, self._current_seq, kind, actor, peer, outcome=outcome))

    # --- channel ---
    def transmit(self, node: NodeId, kind: FrameKind, hop_rx: NodeId, payload_id: int, *,
                 src: NodeId, dst: NodeId, delay: int = 0, retry: int = 0,
                 candidates: Sequence[NodeId] = (), energy_report_j: Optional[float] = None,
                 route: Sequence[NodeId] = (), request_id: int = 0) -> Frame:
        sc = self.scenario
        size = sc.packet_size_bits if kind is FrameKind.DATA else sc.control_size_bits
        frame = Frame(kind, src, dst, node, hop_rx, size, payload_id, self.next_seq(),
                      energy_report_j, retry, tuple(candidates), tuple(route), request_id)
        if delay > 0:
            self.schedule(self.now + delay, EventKind.TX_START, node, frame)
        else:
            self._offer(node, frame)
        return frame

    def _offer(self, node_id: NodeId, frame: Frame) -> None:
        node = self.nodes[node_id]
        if not node.alive:
            return
        if self.now < node.tx_until:
            self._txq[node_id].append(frame)
            return
        if self.now < node.sleep_until:
            self.schedule(node.sleep_until, EventKind.TX_START, node_id, frame)
            return
        self._start_tx(node_id, frame)

    def _start_tx(self, node_id: NodeId, frame: Frame) -> None:
        sc = self.scenario
        node = self.nodes[node_id]
        if self._settle(node_id, self.now):
            self._kill(node_id)
            return
        category = frame.kind.value
        if frame.kind is FrameKind.DATA and frame.retry > 0:
            category = "DATA_RETX"
        _, died, taken = debit(node, tx_energy(self.model, frame.size_bits, node.range_m))
        self.trace.energy.record(node_id, "tx", category, taken)
        if died:
            self.record(TraceRow(self.now, frame.seq, "tx", node_id, frame.hop_rx,
                                 frame.kind.value, "aborted", taken))
            self._kill(node_id)
            return
        airtime = sc.data_airtime if frame.kind is FrameKind.DATA else sc.control_airtime
        tx = Transmission(frame, self.now, self.now + airtime, node.pos, node.range_m,
                          tx_power_w(self.model, sc.bitrate_bps, node.range_m))
        node.tx_until = tx.end
        # no listening draw while sending; stay up for the answer
        self._settled[node_id] = max(self._settled[node_id], tx.end)
        self._awake_until[node_id] = max(self._awake_until[node_id], tx.end + sc.tf)
        self._watch_energy(node_id)
        self._busy[node_id].append((tx.start, tx.end))
        receivers = tuple(
            n.id for n in self.nodes if n.id != node_id and n.alive and reaches(tx, n.pos)
        )
        dozing = frozenset(r for r in receivers if not self.listening(r, self.now))
        for r in receivers:
            self._incoming[r].append(tx)
            if r not in dozing:
                self.nodes[r].rx_until = max(self.nodes[r].rx_until, tx.end)
        self.record(TraceRow(self.now, frame.seq, "tx", node_id,
                             None if frame.is_broadcast else frame.hop_rx,
                             frame.kind.value, "retry" if frame.retry > 0 else "", taken))
        self.schedule(tx.end, EventKind.FRAME_ARRIVAL, node_id, _OnAir(tx, receivers, dozing))

    # --- idle listening ---
    def listening(self, node_id: NodeId, t: SimTime) -> bool:
        """True if the radio is on its listen schedule (or kept awake) at t."""
        duty = self._duty[node_id]
        return duty is None or t < self._awake_until[node_id] or duty.awake_at(t)

    def _awake_ticks(self, node_id: NodeId, a: SimTime, b: SimTime) -> int:
        if b <= a:
            return 0
        forced_end = min(b, max(a, self._awake_until[node_id]))
        duty = self._duty[node_id]
        rest = b - forced_end if duty is None else duty.awake_ticks(forced_end, b)
        return forced_end - a + rest

    def _settle(self, node_id: NodeId, upto: SimTime) -> bool:
        """Charge idle listening up to `upto`. Returns True if that emptied the node."""
        node = self.nodes[node_id]
        start = self._settled[node_id]
        if upto <= start or not node.alive:
            return False
        self._settled[node_id] = upto
        ticks = self._awake_ticks(node_id, start, upto) if self._listen_j > 0 else 0
        if not ticks:
            return False
        _, died, taken = debit(node, ticks * self._listen_j)
        self.trace.energy.record(node_id, "rx", "LISTEN", taken)
        return died

    def _depletion_tick(self, node_id: NodeId) -> Optional[SimTime]:
        """Tick at which listening alone would empty the node."""
        node = self.nodes[node_id]
        if self._listen_j <= 0 or not node.alive:
            return None
        start = self._settled[node_id]
        k = max(1, math.ceil(node.energy_j / self._listen_j))
        forced = max(0, self._awake_until[node_id] - start)
        if k <= forced:
            return start + k
        k -= forced
        duty = self._duty[node_id]
        return start + forced + k if duty is None else duty.nth_awake_end(start + forced, k)

    def _watch_energy(self, node_id: NodeId) -> None:
        at = self._depletion_tick(node_id)
        if at is None or at > self.scenario.sim_time_ticks:
            return
        pending = self._depletion_at[node_id]
        if pending is not None and pending <= at:
            return
        self._depletion_at[node_id] = at
        self.schedule(max(at, self.now), EventKind.ENERGY_DEPLETION, node_id, at)

    def _on_depletion(self, ev: Event) -> None:
        node_id = ev.actor
        # superseded by an earlier projection
        if ev.data != self._depletion_at[node_id] or not self.nodes[node_id].alive:
            return
        self._depletion_at[node_id] = None
        if self._settle(node_id, self.now):
            self._kill(node_id)
            return
        self._watch_energy(node_id)

    def _prune(self, node_id: NodeId) -> None:
        horizon = self.now - self._max_air
        self._incoming[node_id] = [t for t in self._incoming[node_id] if t.end > horizon]
        self._busy[node_id] = [(s, e) for s, e in self._busy[node_id] if e > horizon]

    # --- event handlers ---
    def _on_frame_arrival(self, ev: Event) -> None:
        air: _OnAir = ev.data
        tx, frame = air.tx, air.tx.frame
        outcomes: dict[NodeId, ReceptionOutcome] = {}
        for r in air.receivers:
            rx = self.nodes[r]
            if not rx.alive:
                continue
            if self._settle(r, self.now):
                self._kill(r)
                continue
            window = (tx.start, tx.end)
            active = [t for t in self._incoming[r] if t.overlaps(*window)]
            busy = self._busy[r]
            if r in air.dozing:
                busy = busy + [window]
            outcome = resolve_reception(rx, active, window, busy)[frame.seq]
            outcomes[r] = outcome
            taken, died = 0.0, False
            if outcome in (ReceptionOutcome.DELIVERED, ReceptionOutcome.COLLIDED):
                _, died, taken = debit(rx, rx_energy(self.model, frame.size_bits))
                self.trace.energy.record(r, "rx", frame.kind.value, taken)
            if outcome is ReceptionOutcome.COLLIDED:
                rx.interference_count += 1
            self.record(TraceRow(self.now, frame.seq, "rx", r, frame.hop_tx,
                                 frame.kind.value, outcome.value, taken))
            self._prune(r)
            if died:
                self._kill(r)
            elif taken:
                self._watch_energy(r)

        # radio state as the frame ended, before any receiver answers it
        idle = {r: self.nodes[r].mode_at(self.now) is RadioMode.IDLE for r in outcomes}
        for r, outcome in outcomes.items():
            if outcome is ReceptionOutcome.DELIVERED and self.nodes[r].alive and frame.addressed_to(r):
                self._dispatch(r, frame, idle[r])

        sender = frame.hop_tx
        if frame.kind in RELIABLE_KINDS and not frame.is_broadcast and self.nodes[sender].alive:
            delivered = (outcomes.get(frame.hop_rx) is ReceptionOutcome.DELIVERED
                         and self.nodes[frame.hop_rx].alive)
            self.protocol.on_control_outcome(sender, frame, delivered)

        if self.nodes[sender].alive and self._txq[sender]:
            self._offer(sender, self._txq[sender].popleft())

    def _dispatch(self, node_id: NodeId, frame: Frame, radio_idle: bool) -> None:
        mac = self.macs[node_id]
        node = self.nodes[node_id]
        if frame.kind is FrameKind.RREQUEST:
            actions = mac.on_rrequest(self.now, frame, radio_idle, node.energy_j)
        elif frame.kind is FrameKind.ACK1:
            actions = mac.on_ack1(self.now, frame)
        elif frame.kind is FrameKind.DATA:
            actions = mac.on_data(self.now, frame, self.protocol.requires_grant)
        elif frame.kind is FrameKind.ACK2:
            actions = mac.on_ack2(self.now, frame)
        else:
            self.protocol.on_frame(node_id, frame)
            return
        self.execute(node_id, actions)

    def execute(self, node_id: NodeId, actions: Sequence[Action]) -> None:
        """Carry out what a handshake machine asked for."""
        for action in actions:
            if not self.nodes[node_id].alive:
                return
            if isinstance(action, Emit):
                rec = self.trace.payloads[action.payload_id]
                self.transmit(node_id, action.kind, action.hop_rx, action.payload_id,
                              src=rec.src, dst=rec.dst, delay=action.delay, retry=action.retry,
                              candidates=action.candidates, energy_report_j=action.energy_report_j)
            elif isinstance(action, ArmTimer):
                self.schedule(action.deadline, EventKind.TIMER_FIRE, node_id, action.token)
            elif isinstance(action, BeginData):
                self._sleep_bystanders(node_id, action.peer)
            else:
                self.protocol.on_mac_action(node_id, action)

    def _sleep_bystanders(self, tx_id: NodeId, rx_id: NodeId) -> None:
        sc = self.scenario
        if not sc.sleep_enabled or not self.protocol.sleep_bystanders:
            return
        pending = [n.id for n in self.nodes if n.alive and self.has_pending(n.id)]
        deadlines = schedule_neighbor_sleep(self.now, self.nodes[tx_id], self.nodes[rx_id],
                                            self.nodes, sc.data_airtime + sc.control_airtime,
                                            pending)
        for node_id in sorted(deadlines):
            until = deadlines[node_id]
            node = self.nodes[node_id]
            if self._settle(node_id, self.now):
                self._kill(node_id)
                continue
            # asleep: no listening draw
            self._settled[node_id] = max(self._settled[node_id], until)
            node.sleep_until = max(node.sleep_until, until)
            self._busy[node_id].append((self.now, until))
            self.record(TraceRow(self.now, self._current_seq, "sleep", node_id, tx_id,
                                 outcome=str(until)))

    def _on_tx_start(self, ev: Event) -> None:
        self._offer(ev.actor, ev.data)

    def _on_timer(self, ev: Event) -> None:
        if not self.nodes[ev.actor].alive:
            return
        actions = self.macs[ev.actor].on_timeout(self.now, ev.data)
        if actions:
            self.note("timer", ev.actor, self.macs[ev.actor].state.peer)
            self.execute(ev.actor, actions)

    def _on_protocol_timer(self, ev: Event) -> None:
        if self.nodes[ev.actor].alive:
            self.protocol.on_timer(ev.actor, ev.data)

    def _on_generation(self, ev: Event) -> None:
        src = ev.actor
        if not self.nodes[src].alive:
            return
        payload = self.new_payload(src, ev.data.destination)
        self.record(TraceRow(self.now, self._current_seq, "gen", src, payload.dst,
                             FrameKind.DATA.value))
        self.protocol.on_generate(src, payload)

    def _on_mobility(self, ev: Event) -> None:
        step = self.scenario.mobility_step_ticks
        self.mobility.step(self.now, self.nodes, step)
        if self.now + step <= self.scenario.sim_time_ticks:
            self.schedule(self.now + step, EventKind.MOBILITY_STEP)

    def _on_sample(self, ev: Event) -> None:
        self.trace.samples.append((self.now, self.alive_fraction()))
        nxt = self.now + self.scenario.sample_interval_ticks
        if nxt <= self.scenario.sim_time_ticks:
            self.schedule(nxt, EventKind.METRICS_SAMPLE)

    def _on_failure(self, ev: Event) -> None:
        node = self.nodes[ev.actor]
        if not node.alive:
            return
        if not self._settle(node.id, self.now):
            _, _, taken = debit(node, node.energy_j)
            self.trace.energy.record(node.id, "drain", "FAILURE", taken)
        self._kill(node.id)

    def _kill(self, node_id: NodeId) -> None:
        self.trace.deaths.append((self.now, node_id))
        self.record(TraceRow(self.now, self._current_seq, "death", node_id))
        logger.debug("node %d died at tick %d", node_id, self.now)
        self.macs[node_id].reset()
        self._txq[node_id].clear()
        self.protocol.on_death(node_id)
        if self._draining or not self.sources:
            return
        if not any(self.nodes[s].alive for s in self.sources):
            logger.info("all sources dead at tick %d", self.now)
            if self._listen_j > 0:
                self._draining = True
            else:
                self._stopped = True

    # --- main loop ---
    def run(self) -> TraceLog:
        sc = self.scenario
        logger.info("run start: protocol=%s seed=%d nodes=%d payloads=%d",
                    self.protocol.name, sc.seed, len(self.nodes), len(self.generations))
        for g in self.generations:
            self.schedule(g.at, EventKind.PACKET_GENERATION, g.source, g)
        for at, node_id in self.failures:
            self.schedule(at, EventKind.NODE_FAILURE, node_id)
        if self.mobility.enabled:
            self.schedule(sc.mobility_step_ticks, EventKind.MOBILITY_STEP)
        self.schedule(0, EventKind.METRICS_SAMPLE)
        for n in self.nodes:
            self._watch_energy(n.id)

        while self._queue and not self._stopped:
            if self._queue[0].at > sc.sim_time_ticks:
                break
            ev = heapq.heappop(self._queue)
            if self._draining and ev.kind not in DRAIN_KINDS:
                continue
            self.now = ev.at
            self._current_seq = ev.seq
            self._handlers[ev.kind](ev)

        end = self.now if self._stopped else sc.sim_time_ticks
        self.now = end
        for n in self.nodes:
            if self._settle(n.id, end):
                self._kill(n.id)
        self.trace.end_tick = end
        if not self.trace.samples or self.trace.samples[-1][0] != end:
            self.trace.samples.append((end, self.alive_fraction()))
        self.trace.residual_energy = {n.id: n.energy_j for n in self.nodes}
        logger.info("run end: protocol=%s seed=%d tick=%d deaths=%d delivered=%d/%d",
                    self.protocol.name, sc.seed, end, len(self.trace.deaths),
                    len(self.trace.payloads.delivered), self.trace.payloads.generated)
        return self.trace


def simulate(scenario: Scenario, layout: Optional[ScriptedLayout] = None) -> TraceLog:
    return Simulator(scenario, layout=layout).run()


def run(scenario: Scenario, layout: Optional[ScriptedLayout] = None):
    """Execute one scenario; returns (TraceLog, RunMetrics)."""
    from .metrics import compute_metrics

    trace = simulate(scenario, layout)
    return trace, compute_metrics(trace, scenario.lifetime_fraction)
