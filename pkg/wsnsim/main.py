# wsnsim/main.py
"""Command-line front end: run, compare and sweep."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Any, Optional, Sequence

from .config import CONFIG_KEYS, ConfigInvalid, ProtocolName, UnknownKey, build_scenario, load_config, scenario_hash
from .engine import run
from .outputs import (
    ComparisonRow,
    RunRecord,
    summarize,
    write_comparison,
    write_lifetime_curve,
    write_metrics,
    write_trace,
    write_workbook,
)

logger = logging.getLogger(__name__)

PROTOCOLS = (ProtocolName.E2XLRADR.value, ProtocolName.DSR.value)
# every sweep already runs each seed under both protocols
SWEEP_AXES = ("seed", "protocol")


# --- argument helpers ---
def parse_seeds(text: str) -> list[int]:
    """'1,2,5' or '1-10' or a mix of both."""
    seeds: list[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigInvalid("seeds", f"cannot parse {part!r}") from None
    if not seeds:
        raise ConfigInvalid("seeds", "empty seed list")
    return sorted(set(seeds))


def parse_vary(text: str) -> tuple[str, list[str]]:
    if "=" not in text:
        raise ConfigInvalid("vary", "expected KEY=V1,V2,...")
    key, raw = (p.strip() for p in text.split("=", 1))
    if key not in CONFIG_KEYS:
        raise UnknownKey(key)
    if key in SWEEP_AXES:
        raise ConfigInvalid(key, "cannot be varied; the sweep runs every seed under both protocols")
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigInvalid(key, "empty value list")
    return key, values


def base_values(args: argparse.Namespace) -> dict[str, Any]:
    values: dict[str, Any] = dict(load_config(args.config))
    if getattr(args, "protocol", None):
        values["protocol"] = args.protocol
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return values


# --- jobs ---
@dataclass(frozen=True)
class Job:
    values: dict[str, Any]
    vary_key: Optional[str] = None
    vary_value: Optional[str] = None


def execute_job(job: Job) -> RunRecord:
    scenario = build_scenario(job.values)
    _, metrics = run(scenario)
    return RunRecord(scenario_hash(scenario), scenario.seed, scenario.protocol.value, metrics,
                     job.vary_key, job.vary_value)


def run_jobs(jobs: Sequence[Job], workers: int = 1) -> list[RunRecord]:
    # runs are independent; rows are sorted before writing so order does not matter
    for job in jobs:
        build_scenario(job.values)
    if workers <= 1 or len(jobs) <= 1:
        return [execute_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute_job, jobs))


def _store(args: argparse.Namespace, records: Sequence[RunRecord]) -> None:
    if args.db:
        from .models import store_results

        n = store_results(args.db, records)
        print(f"✅ stored {n} row(s) in run_results")


# --- commands ---
def cmd_run(args: argparse.Namespace) -> int:
    scenario = build_scenario(base_values(args))
    trace, metrics = run(scenario)
    out = FsPath(args.out)
    record = RunRecord(scenario_hash(scenario), scenario.seed, scenario.protocol.value, metrics)
    write_metrics(out / "metrics.csv", [record])
    write_lifetime_curve(out / "lifetime_curve.csv", trace)
    if args.trace:
        write_trace(out / "trace.csv", trace)
    _store(args, [record])
    censored = " (censored)" if metrics.lifetime_censored else ""
    print(f"✅ {scenario.protocol.value} seed={scenario.seed}: lifetime={metrics.lifetime_ticks}{censored} "
          f"delivered={metrics.delivered}/{metrics.generated} -> {out}")
    return 0


def _pair(records: Sequence[RunRecord]) -> list[ComparisonRow]:
    by_seed: dict[int, dict[str, RunRecord]] = {}
    for rec in records:
        by_seed.setdefault(rec.seed, {})[rec.protocol] = rec
    return [
        ComparisonRow(seed, pair["e2xlradr"].metrics, pair["dsr"].metrics)
        for seed, pair in sorted(by_seed.items())
    ]


def cmd_compare(args: argparse.Namespace) -> int:
    seeds = parse_seeds(args.seeds)
    values = base_values(args)
    jobs = [Job({**values, "seed": s, "protocol": p}) for s in seeds for p in PROTOCOLS]
    records = run_jobs(jobs, args.jobs)
    rows = _pair(records)
    out = FsPath(args.out)
    write_metrics(out / "metrics.csv", records)
    write_comparison(out / "comparison.csv", rows)
    if args.xlsx:
        write_workbook(FsPath(args.xlsx), records, comparison=rows)
    _store(args, records)

    print(f"{'seed':>6} {'e2xlradr':>10} {'dsr':>10} {'ratio':>8}")
    for r in rows:
        ratio, censored = r.ratio
        flag = " *" if censored else ""
        shown = f"{ratio:.3f}" if ratio is not None else "-"
        print(f"{r.seed:>6} {r.ours.lifetime_ticks:>10} {r.baseline.lifetime_ticks:>10} {shown:>8}{flag}")
    summary = summarize(rows)
    if summary.mean_ratio is None:
        print("⚠️  every pair is censored; no mean lifetime ratio")
    else:
        print(f"✅ mean lifetime ratio e2xlradr/dsr = {summary.mean_ratio:.3f} over "
              f"{summary.pairs - summary.censored_pairs} uncensored pair(s)")
    if summary.censored_pairs:
        print(f"⚠️  {summary.censored_pairs} pair(s) censored (*), excluded from the mean")
    if summary.low_confidence:
        print("⚠️  single seed: low-confidence comparison")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    key, vary_values = parse_vary(args.vary)
    seeds = parse_seeds(args.seeds)
    values = base_values(args)
    jobs = [
        Job({**values, key: v, "seed": s, "protocol": p}, key, v)
        for v in vary_values for s in seeds for p in PROTOCOLS
    ]
    records = run_jobs(jobs, args.jobs)
    out = FsPath(args.out)
    write_metrics(out / "metrics.csv", records, with_vary=True)
    if args.xlsx:
        write_workbook(FsPath(args.xlsx), records, with_vary=True)
    _store(args, records)
    print(f"✅ sweep {key} over {len(vary_values)} value(s) x {len(seeds)} seed(s): "
          f"{len(records)} rows -> {out / 'metrics.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsnsim", description="Discrete-event WSN routing simulator")
    parser.add_argument("-l", "--log", default="WARNING", help="logging level (DEBUG, INFO, ...)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key = value scenario file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--db", help="SQLAlchemy URL to append metrics rows to")

    p = sub.add_parser("run", help="execute one scenario")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--trace", action="store_true", help="also write trace.csv")
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (("compare", cmd_compare, "paired e2xlradr / dsr runs"),
                                 ("sweep", cmd_sweep, "vary one key across values")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--seeds", default="1", help="e.g. 1,2,5 or 1-10")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--xlsx", help="also write an Excel workbook")
        if name == "sweep":
            p.add_argument("--vary", required=True, help="KEY=V1,V2,...")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log).upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as e:
        print(f"❌ config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"❌ I/O error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.debug("unexpected failure", exc_info=True)
        print(f"❌ internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
