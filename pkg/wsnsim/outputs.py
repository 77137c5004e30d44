# wsnsim/outputs.py
"""CSV bundle and optional Excel workbook for run results."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Any, Iterable, Optional, Sequence

from openpyxl import Workbook

from .metrics import RunMetrics, lifetime_ratio
from .trace import TraceLog

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "lifetime_ticks", "lifetime_censored", "throughput_bps", "mean_delay_ticks",
    "delivery_ratio", "generated", "delivered", "total_energy_j",
    "retransmissions_total", "deaths", "per_node_death_times",
)
TRACE_COLUMNS = ("tick", "seq", "kind", "actor", "peer", "frame_kind", "outcome", "energy_debit_j")
CURVE_COLUMNS = ("tick", "alive_fraction")
COMPARISON_COLUMNS = (
    "seed", "e2xlradr_lifetime_ticks", "e2xlradr_censored",
    "dsr_lifetime_ticks", "dsr_censored", "ratio", "ratio_censored",
)


def fmt(value: Any) -> str:
    """Render one cell: floats with 9 significant digits, None as empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


@dataclass(frozen=True)
class RunRecord:
    """One metrics row: which run it was and what it measured."""

    scenario_hash: str
    seed: int
    protocol: str
    metrics: RunMetrics
    vary_key: Optional[str] = None
    vary_value: Optional[str] = None

    def sort_key(self):
        return (_natural(self.vary_value), self.seed, self.protocol)

    def as_row(self, with_vary: bool = False) -> dict[str, str]:
        m = self.metrics
        row = {"scenario_hash": self.scenario_hash, "seed": fmt(self.seed), "protocol": self.protocol}
        if with_vary:
            row["vary_key"] = fmt(self.vary_key)
            row["vary_value"] = fmt(self.vary_value)
        row.update({
            "lifetime_ticks": fmt(m.lifetime_ticks),
            "lifetime_censored": fmt(m.lifetime_censored),
            "throughput_bps": fmt(float(m.throughput_bps)),
            "mean_delay_ticks": fmt(m.mean_delay_ticks),
            "delivery_ratio": fmt(float(m.delivery_ratio)),
            "generated": fmt(m.generated),
            "delivered": fmt(m.delivered),
            "total_energy_j": fmt(float(m.total_energy_j)),
            "retransmissions_total": fmt(m.retransmissions_total),
            "deaths": fmt(m.deaths),
            "per_node_death_times": ";".join(f"{n}:{t}" for n, t in m.per_node_death_times),
        })
        return row


def _natural(value: Optional[str]):
    # numeric sweep values sort numerically, others lexically
    if value is None:
        return (0, 0.0, "")
    try:
        return (0, float(value), value)
    except ValueError:
        return (1, 0.0, value)


def metric_columns(with_vary: bool = False) -> tuple[str, ...]:
    head = ("scenario_hash", "seed", "protocol")
    if with_vary:
        head += ("vary_key", "vary_value")
    return head + METRIC_COLUMNS


def _write(path: FsPath, columns: Sequence[str], rows: Iterable[dict[str, str]]) -> FsPath:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.debug("wrote %s", path)
    return path


def write_metrics(path: FsPath, records: Sequence[RunRecord], with_vary: bool = False) -> FsPath:
    ordered = sorted(records, key=RunRecord.sort_key)
    return _write(path, metric_columns(with_vary), (r.as_row(with_vary) for r in ordered))


def trace_rows(trace: TraceLog) -> Iterable[dict[str, str]]:
    for r in trace.rows:
        yield {
            "tick": fmt(r.tick), "seq": fmt(r.seq), "kind": r.kind, "actor": fmt(r.actor),
            "peer": fmt(r.peer), "frame_kind": r.frame_kind, "outcome": r.outcome,
            "energy_debit_j": fmt(float(r.energy_debit_j)),
        }


def write_trace(path: FsPath, trace: TraceLog) -> FsPath:
    return _write(path, TRACE_COLUMNS, trace_rows(trace))


def write_lifetime_curve(path: FsPath, trace: TraceLog) -> FsPath:
    rows = ({"tick": fmt(t), "alive_fraction": fmt(float(f))} for t, f in trace.samples)
    return _write(path, CURVE_COLUMNS, rows)


@dataclass(frozen=True)
class ComparisonRow:
    seed: int
    ours: RunMetrics
    baseline: RunMetrics

    @property
    def ratio(self) -> tuple[Optional[float], bool]:
        return lifetime_ratio(self.ours, self.baseline)

    def as_row(self) -> dict[str, str]:
        ratio, censored = self.ratio
        return {
            "seed": fmt(self.seed),
            "e2xlradr_lifetime_ticks": fmt(self.ours.lifetime_ticks),
            "e2xlradr_censored": fmt(self.ours.lifetime_censored),
            "dsr_lifetime_ticks": fmt(self.baseline.lifetime_ticks),
            "dsr_censored": fmt(self.baseline.lifetime_censored),
            "ratio": fmt(ratio),
            "ratio_censored": fmt(censored),
        }


@dataclass(frozen=True)
class ComparisonSummary:
    pairs: int
    mean_ratio: Optional[float]
    censored_pairs: int

    @property
    def low_confidence(self) -> bool:
        return self.pairs < 2


def summarize(rows: Sequence[ComparisonRow]) -> ComparisonSummary:
    """Mean lifetime ratio over pairs where neither side is censored."""
    observed = [r.ratio[0] for r in rows if r.ratio[0] is not None and not r.ratio[1]]
    mean = sum(observed) / len(observed) if observed else None
    return ComparisonSummary(len(rows), mean, sum(1 for r in rows if r.ratio[1]))


def write_comparison(path: FsPath, rows: Sequence[ComparisonRow]) -> FsPath:
    ordered = sorted(rows, key=lambda r: r.seed)
    return _write(path, COMPARISON_COLUMNS, (r.as_row() for r in ordered))


def write_workbook(path: FsPath, records: Sequence[RunRecord], with_vary: bool = False,
                   comparison: Sequence[ComparisonRow] = ()) -> FsPath:
    """Same rows as metrics.csv on one sheet, the comparison summary on another."""
    wb = Workbook()
    ws = wb.active
    ws.title = "runs"
    columns = metric_columns(with_vary)
    ws.append(list(columns))
    for rec in sorted(records, key=RunRecord.sort_key):
        row = rec.as_row(with_vary)
        ws.append([row[c] for c in columns])

    summary = wb.create_sheet("summary")
    if comparison:
        summary.append(list(COMPARISON_COLUMNS))
        for r in sorted(comparison, key=lambda r: r.seed):
            cells = r.as_row()
            summary.append([cells[c] for c in COMPARISON_COLUMNS])
        s = summarize(comparison)
        summary.append([])
        summary.append(["pairs", s.pairs])
        summary.append(["mean_ratio", fmt(s.mean_ratio)])
        summary.append(["censored_pairs", s.censored_pairs])
    else:
        summary.append(["protocol", "runs", "mean_lifetime_ticks", "mean_delivery_ratio"])
        by_protocol: dict[str, list[RunMetrics]] = {}
        for rec in records:
            by_protocol.setdefault(rec.protocol, []).append(rec.metrics)
        for protocol in sorted(by_protocol):
            ms = by_protocol[protocol]
            summary.append([
                protocol, len(ms),
                fmt(sum(m.lifetime_ticks for m in ms) / len(ms)),
                fmt(sum(m.delivery_ratio for m in ms) / len(ms)),
            ])
    path.parent.mkdir(parents=True, exist_ok=True)
    wb.save(path)
    return path
