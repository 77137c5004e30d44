# wsnsim/retry_policy.py
"""Dynamic per-hop retransmission limit (Kmax) for DATA frames."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import Path, hops_between


class KmaxMode(str, enum.Enum):
    # hops(source -> transmitter) + hops(receiver -> destination)
    FORMULA = "formula"
    # initial m, then m+1, m+2 ... at each further hop
    PROGRESSIVE = "progressive"


@dataclass(frozen=True, slots=True)
class KmaxPolicy:
    mode: KmaxMode = KmaxMode.FORMULA
    floor: int = 1

    def __post_init__(self):
        if self.floor < 1:
            raise ValueError("kmax floor must be at least 1")


@dataclass(frozen=True, slots=True)
class RetryContext:
    path: Path
    transmitter_index: int
    retry_count: int = 0

    def __post_init__(self):
        if not 0 <= self.transmitter_index < self.path.L:
            raise ValueError(
                f"transmitter index {self.transmitter_index} outside path of {self.path.L} hops"
            )
        if self.retry_count < 0:
            raise ValueError("retry_count must be non-negative")

    @property
    def transmitter(self) -> int:
        return self.path.nodes[self.transmitter_index]

    @property
    def receiver(self) -> int:
        return self.path.nodes[self.transmitter_index + 1]


def initial_m(path: Path) -> int:
    """Hops left to the destination, counted from the first receiver."""
    if path.L < 1:
        raise ValueError("path needs at least one hop")
    return hops_between(path, path.nodes[1], path.destination)


def raw_kmax(ctx: RetryContext, mode: KmaxMode) -> int:
    if mode is KmaxMode.FORMULA:
        return (hops_between(ctx.path, ctx.path.source, ctx.transmitter)
                + hops_between(ctx.path, ctx.receiver, ctx.path.destination))
    return initial_m(ctx.path) + ctx.transmitter_index


def kmax_for_link(ctx: RetryContext, policy: KmaxPolicy) -> int:
    return max(policy.floor, raw_kmax(ctx, policy.mode))


def should_drop(ctx: RetryContext, policy: KmaxPolicy) -> bool:
    return ctx.retry_count >= kmax_for_link(ctx, policy)
