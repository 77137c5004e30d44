# wsnsim/metrics.py
"""Evaluation quantities computed from a finished TraceLog."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import NodeId, SimTime
from .trace import TraceLog


@dataclass(frozen=True, slots=True)
class Censored:
    """Fewer nodes died than the lifetime threshold; `at` is the run end."""
    at: SimTime


Lifetime = Union[SimTime, Censored]


def death_order(trace: TraceLog) -> list[tuple[SimTime, NodeId]]:
    # simultaneous deaths count in node id order
    return sorted(trace.deaths)


def network_lifetime(trace: TraceLog, fraction: float = 0.30) -> Lifetime:
    needed = max(1, math.ceil(round(fraction * trace.node_count, 9)))
    deaths = death_order(trace)
    if len(deaths) >= needed:
        return deaths[needed - 1][0]
    return Censored(trace.end_tick)


def throughput_and_delay(trace: TraceLog) -> tuple[float, Optional[float]]:
    """Delivered payload bits per simulated second, and mean end-to-end delay in ticks.

    The delay is None when nothing was delivered.
    """
    delivered = trace.payloads.delivered
    seconds = trace.sim_time_ticks * trace.tick_seconds
    bits = sum(rec.size_bits for rec in delivered)
    throughput = bits / seconds if seconds > 0 else 0.0
    if not delivered:
        return throughput, None
    delays = np.array([rec.delivered_at - rec.created_at for rec in delivered], dtype=float)
    return throughput, float(delays.mean())


@dataclass
class EnergyReport:
    per_node: dict[NodeId, float] = field(default_factory=dict)
    by_direction: dict[str, float] = field(default_factory=dict)
    by_category: dict[tuple[str, str], float] = field(default_factory=dict)
    total_j: float = 0.0

    def category(self, direction: str, category: str) -> float:
        return self.by_category.get((direction, category), 0.0)


def energy_report(trace: TraceLog) -> EnergyReport:
    per_node: dict[NodeId, float] = defaultdict(float)
    by_direction: dict[str, float] = defaultdict(float)
    by_category: dict[tuple[str, str], float] = defaultdict(float)
    for (node, direction, category), joules in sorted(trace.energy.entries.items()):
        per_node[node] += joules
        by_direction[direction] += joules
        by_category[(direction, category)] += joules
    return EnergyReport(dict(per_node), dict(by_direction), dict(by_category),
                        math.fsum(trace.energy.entries.values()))


def consumed_energy(trace: TraceLog) -> dict[NodeId, float]:
    """initial - residual per node, the quantity the ledger must match."""
    return {n: trace.initial_energy[n] - trace.residual_energy.get(n, trace.initial_energy[n])
            for n in trace.initial_energy}


@dataclass(frozen=True)
class RunMetrics:
    lifetime: Lifetime
    throughput_bps: float
    mean_delay_ticks: Optional[float]
    delivery_ratio: float
    generated: int
    delivered: int
    total_energy_j: float
    retransmissions_total: int
    per_node_death_times: tuple[tuple[NodeId, SimTime], ...] = ()
    loss_causes: dict[str, int] = field(default_factory=dict)

    @property
    def lifetime_censored(self) -> bool:
        return isinstance(self.lifetime, Censored)

    @property
    def lifetime_ticks(self) -> SimTime:
        return self.lifetime.at if isinstance(self.lifetime, Censored) else self.lifetime

    @property
    def deaths(self) -> int:
        return len(self.per_node_death_times)


def compute_metrics(trace: TraceLog, fraction: float = 0.30) -> RunMetrics:
    throughput, delay = throughput_and_delay(trace)
    generated = trace.payloads.generated
    delivered = len(trace.payloads.delivered)
    retx = sum(1 for row in trace.rows_of("tx") if row.outcome == "retry")
    causes = Counter(rec.lost_cause.value for rec in trace.payloads.lost)
    return RunMetrics(
        lifetime=network_lifetime(trace, fraction),
        throughput_bps=throughput,
        mean_delay_ticks=delay,
        delivery_ratio=delivered / generated if generated else 0.0,
        generated=generated,
        delivered=delivered,
        total_energy_j=energy_report(trace).total_j,
        retransmissions_total=retx,
        per_node_death_times=tuple((node, tick) for tick, node in death_order(trace)),
        loss_causes=dict(sorted(causes.items())),
    )


def lifetime_ratio(ours: RunMetrics, baseline: RunMetrics) -> tuple[Optional[float], bool]:
    """ours / baseline lifetime, and whether either side is censored."""
    censored = ours.lifetime_censored or baseline.lifetime_censored
    if baseline.lifetime_ticks <= 0:
        return None, censored
    return ours.lifetime_ticks / baseline.lifetime_ticks, censored
