"""Ledger arithmetic for a long-running deployment.

Builds a synthetic ledger (default: 580 runs averaging 4.31 h) and prints the
same aggregates ``proarchiver status`` reports, plus the hours per day that six
back-to-back runs at the default cutoff occupy.
"""

import argparse
from datetime import datetime, timedelta, timezone

from proarchiver.config import format_duration, parse_duration
from proarchiver.scheduler import DEFAULT_CUTOFF, PLATFORM_MAX_RUN, RUNS_PER_DAY
from proarchiver.store import RunLedgerEntry, StoreSnapshot, aggregate_stats, mean_daily_hours


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=580)
    ap.add_argument("--hours", type=float, default=4.31, help="mean wall hours per run")
    ap.add_argument("--cutoff", default=format_duration(DEFAULT_CUTOFF))
    args = ap.parse_args()

    t0 = datetime(2025, 1, 1, tzinfo=timezone.utc)
    spacing = timedelta(hours=24 / RUNS_PER_DAY)
    ledger = [RunLedgerEntry(i, t0 + i * spacing, args.hours * 3600, 0) for i in range(1, args.runs + 1)]
    stats = aggregate_stats(StoreSnapshot(ledger=ledger))
    print(f"runs: {stats['total_runs']}")
    print(f"total hours: {stats['total_wall_hours']:.1f}")
    print(f"mean run hours: {stats['mean_run_hours']:.2f}")
    print(f"span: {(ledger[-1].started_at - ledger[0].started_at).days} days")

    cutoff = parse_duration(args.cutoff)
    daily = [RunLedgerEntry(i + 1, t0 + i * spacing, cutoff, cutoff) for i in range(RUNS_PER_DAY * 7)]
    print(f"\ncutoff {format_duration(cutoff)} x {RUNS_PER_DAY} runs/day = {mean_daily_hours(daily):.1f} h/day")
    print(f"headroom per run before the next starts: {format_duration(spacing.total_seconds() - cutoff)}")
    print(f"headroom under the platform ceiling: {format_duration(PLATFORM_MAX_RUN - cutoff)}")


if __name__ == "__main__":
    main()
