# wsnsim/radio.py
"""Reachability, half-duplex collision rules and first-order radio energy."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import Frame, NodeState, Position, SimTime, distance


class ReceptionOutcome(str, enum.Enum):
    DELIVERED = "Delivered"
    COLLIDED = "Collided"
    RX_BUSY = "RxBusy"
    OUT_OF_RANGE = "OutOfRange"


@dataclass(frozen=True, slots=True)
class EnergyModel:
    e_elec_j_per_bit: float = 50e-9
    eps_amp_j_per_bit_m2: float = 100e-12

    def __post_init__(self):
        if self.e_elec_j_per_bit <= 0 or self.eps_amp_j_per_bit_m2 <= 0:
            raise ValueError("energy model constants must be strictly positive")


@dataclass(frozen=True, slots=True)
class Transmission:
    frame: Frame
    start: SimTime
    end: SimTime
    tx_pos: Position
    tx_range_m: float
    tx_power_w: float = 0.0

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("transmission must last at least one tick")

    def overlaps(self, start: SimTime, end: SimTime) -> bool:
        # half-open intervals: back-to-back frames do not overlap
        return self.start < end and start < self.end


def airtime_ticks(size_bits: int, bitrate_bps: float, tick_seconds: float) -> int:
    # round before ceil so that float noise never adds a tick
    return max(1, math.ceil(round(size_bits / bitrate_bps / tick_seconds, 9)))


def in_range(a: NodeState, b: NodeState) -> bool:
    """True iff b lies inside a's radius (boundary inclusive)."""
    return distance(a.pos, b.pos) <= a.range_m


def reaches(tx: Transmission, pos: Position) -> bool:
    return distance(tx.tx_pos, pos) <= tx.tx_range_m


def resolve_reception(
    rx: NodeState,
    active: Iterable[Transmission],
    t_window: tuple[SimTime, SimTime],
    busy: Sequence[tuple[SimTime, SimTime]] = (),
) -> dict[int, ReceptionOutcome]:
    """Outcome of every transmission in `active` as seen by `rx`.

    `busy` lists the intervals during which rx was transmitting or asleep.
    Results are keyed by frame seq and do not depend on the order of `active`.
    """
    lo, hi = t_window
    candidates = [t for t in active if t.overlaps(lo, hi) and t.frame.hop_tx != rx.id]
    audible = [t for t in candidates if reaches(t, rx.pos)]

    outcomes: dict[int, ReceptionOutcome] = {}
    for t in candidates:
        if t not in audible:
            outcomes[t.frame.seq] = ReceptionOutcome.OUT_OF_RANGE
        elif any(t.start < b_end and b_start < t.end for b_start, b_end in busy):
            outcomes[t.frame.seq] = ReceptionOutcome.RX_BUSY
        elif any(o is not t and o.overlaps(t.start, t.end) for o in audible):
            outcomes[t.frame.seq] = ReceptionOutcome.COLLIDED
        else:
            outcomes[t.frame.seq] = ReceptionOutcome.DELIVERED
    return outcomes


def tx_energy(model: EnergyModel, bits: int, d: float) -> float:
    return model.e_elec_j_per_bit * bits + model.eps_amp_j_per_bit_m2 * bits * d * d


def rx_energy(model: EnergyModel, bits: int) -> float:
    return model.e_elec_j_per_bit * bits


def tx_power_w(model: EnergyModel, bitrate_bps: float, d: float) -> float:
    """Power drawn while transmitting at a level that reaches distance d."""
    return tx_energy(model, 1, d) * bitrate_bps


def debit(node: NodeState, j: float) -> tuple[NodeState, bool, float]:
    """Take j joules from node.

    Returns the node, whether this debit killed it, and the amount actually
    taken (clamped at the remaining energy).
    """
    if j < 0:
        raise ValueError("cannot debit negative energy")
    if not node.alive:
        return node, False, 0.0
    taken = min(j, node.energy_j)
    node.energy_j = max(0.0, node.energy_j - j)
    died = node.energy_j <= 0.0
    if died:
        node.energy_j = 0.0
        node.alive = False
    return node, died, taken


@dataclass(frozen=True, slots=True)
class DutyCycle:
    """Periodic listen schedule: awake for the first `awake` ticks of every period."""

    period: int
    awake: int
    offset: int = 0

    def __post_init__(self):
        if not 0 < self.awake <= self.period:
            raise ValueError("awake ticks must lie in 1..period")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")

    def awake_at(self, t: SimTime) -> bool:
        return (t + self.offset) % self.period < self.awake

    def _upto(self, t: SimTime) -> int:
        full, rest = divmod(t + self.offset, self.period)
        return full * self.awake + min(rest, self.awake)

    def awake_ticks(self, a: SimTime, b: SimTime) -> int:
        """Awake ticks in [a, b)."""
        if b <= a:
            return 0
        return self._upto(b) - self._upto(a)

    def nth_awake_end(self, a: SimTime, k: int) -> SimTime:
        """Smallest t with awake_ticks(a, t) == k."""
        if k < 1:
            raise ValueError("k must be at least 1")
        q, j = divmod(self._upto(a) + k - 1, self.awake)
        return q * self.period + j + 1 - self.offset
