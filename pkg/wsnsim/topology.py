# wsnsim/topology.py
"""Node placement, traffic generation and random-waypoint mobility."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .config import MobilityKind, Scenario
from .core import NodeId, NodeState, Position, SimTime

logger = logging.getLogger(__name__)

SUBSTREAMS = ("placement", "traffic", "mobility", "tiebreak", "duty")


class RngStream:
    """Named, independent numpy generators derived from one seed."""

    def __init__(self, seed: int):
        self.seed = seed
        children = np.random.SeedSequence(seed).spawn(len(SUBSTREAMS))
        self._streams = {
            name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(SUBSTREAMS, children)
        }

    @property
    def placement(self) -> np.random.Generator:
        return self._streams["placement"]

    @property
    def traffic(self) -> np.random.Generator:
        return self._streams["traffic"]

    @property
    def mobility(self) -> np.random.Generator:
        return self._streams["mobility"]

    @property
    def tiebreak(self) -> np.random.Generator:
        return self._streams["tiebreak"]

    @property
    def duty(self) -> np.random.Generator:
        return self._streams["duty"]

    def destinations(self, source: NodeId) -> np.random.Generator:
        """Destination draws of one source; the same sequence at every traffic rate."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(len(SUBSTREAMS), source))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True, slots=True)
class Generation:
    at: SimTime
    source: NodeId
    destination: NodeId


@dataclass(frozen=True)
class ScriptedLayout:
    """Hand-built topology: fixed positions, ranges and payload schedule."""

    positions: Sequence[tuple[float, float]]
    ranges: Union[float, Sequence[float]] = 300.0
    sources: Sequence[NodeId] = (0,)
    generations: Sequence[tuple[SimTime, NodeId, NodeId]] = ()
    energies: Optional[Sequence[float]] = None
    # (tick, node): the node is switched off at that tick
    failures: Sequence[tuple[SimTime, NodeId]] = ()

    def range_of(self, node: NodeId) -> float:
        if isinstance(self.ranges, (int, float)):
            return float(self.ranges)
        return float(self.ranges[node])


def place_nodes(scenario: Scenario, rng: RngStream) -> list[NodeState]:
    n = scenario.node_count
    gen = rng.placement
    xs = gen.uniform(0.0, scenario.area_w_m, size=n)
    ys = gen.uniform(0.0, scenario.area_h_m, size=n)
    ranges = gen.uniform(scenario.range_min_m, scenario.range_max_m, size=n)
    return [
        NodeState(
            id=i,
            pos=Position(float(xs[i]), float(ys[i])),
            energy_j=scenario.initial_energy_j,
            range_m=float(ranges[i]),
        )
        for i in range(n)
    ]


def place_scripted(scenario: Scenario, layout: ScriptedLayout) -> list[NodeState]:
    nodes = []
    for i, (x, y) in enumerate(layout.positions):
        energy = layout.energies[i] if layout.energies is not None else scenario.initial_energy_j
        nodes.append(NodeState(id=i, pos=Position(float(x), float(y)), energy_j=energy,
                               range_m=layout.range_of(i), initial_energy_j=energy))
    return nodes


def source_ids(scenario: Scenario) -> list[NodeId]:
    return list(range(scenario.effective_source_count))


def generate_traffic(scenario: Scenario, rng: RngStream,
                     sources: Optional[Sequence[NodeId]] = None) -> list[Generation]:
    """Every packet generation of the run, ordered by (tick, source)."""
    rate = scenario.traffic_rate_pps
    sources = list(sources) if sources is not None else source_ids(scenario)
    sinks = [i for i in range(scenario.node_count) if i not in set(sources)]
    if rate <= 0 or not sources or not sinks:
        return []
    gen = rng.traffic
    base = 1.0 / (rate * scenario.tick_seconds)
    out: list[Generation] = []
    for src in sources:
        picks = rng.destinations(src)
        t = base * gen.uniform(0.0, 1.0)
        while t < scenario.sim_time_ticks:
            dst = sinks[int(picks.integers(0, len(sinks)))]
            out.append(Generation(int(math.floor(t)), src, dst))
            t += base * gen.uniform(0.9, 1.1)
    out.sort(key=lambda g: (g.at, g.source))
    return out


def scripted_traffic(layout: ScriptedLayout) -> list[Generation]:
    return sorted((Generation(at, s, d) for at, s, d in layout.generations),
                  key=lambda g: (g.at, g.source))


@dataclass(slots=True)
class _Waypoint:
    target: Position
    pause_until: SimTime = 0
    arrived: bool = False


@dataclass
class MobilityModel:
    """Random waypoint: move at constant speed, pause on arrival, draw a new target."""

    scenario: Scenario
    rng: RngStream
    waypoints: dict[NodeId, _Waypoint] = field(default_factory=dict)

    @property
    def enabled(self) -> bool:
        return self.scenario.mobility_kind is MobilityKind.RANDOM_WAYPOINT

    def _draw(self) -> Position:
        gen = self.rng.mobility
        return Position(float(gen.uniform(0.0, self.scenario.area_w_m)),
                        float(gen.uniform(0.0, self.scenario.area_h_m)))

    def step(self, now: SimTime, nodes: Sequence[NodeState], dt_ticks: int) -> None:
        if not self.enabled:
            return
        sc = self.scenario
        max_move = sc.mobility_speed_mps * dt_ticks * sc.tick_seconds
        for node in nodes:
            if not node.alive:
                continue
            wp = self.waypoints.get(node.id)
            if wp is None:
                wp = self.waypoints[node.id] = _Waypoint(self._draw())
            if wp.arrived:
                if now < wp.pause_until:
                    continue
                wp.target = self._draw()
                wp.arrived = False
            node.pos = _advance(node.pos, wp.target, max_move, sc.area_w_m, sc.area_h_m)
            if node.pos == wp.target:
                wp.arrived = True
                wp.pause_until = now + sc.mobility_pause_ticks


def _advance(pos: Position, target: Position, max_move: float, w: float, h: float) -> Position:
    dx, dy = target.x - pos.x, target.y - pos.y
    dist = math.hypot(dx, dy)
    if dist <= max_move:
        return target
    f = max_move / dist
    x = min(max(pos.x + dx * f, 0.0), w)
    y = min(max(pos.y + dy * f, 0.0), h)
    return Position(x, y)
