"""Command-line entry point: ``proarchiver {discover,run,status,heartbeat,simulate}``.

Scheduling is left to cron or CI. The reference deployment runs ``run`` six
times a day with the default 3h55m cutoff, plus ``status`` as a watchdog.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Mapping, Sequence

from . import __version__
from .changes import compile_patterns, proactive_pass
from .client import ArchiveClient
from .clock import Clock, SystemClock
from .config import AlreadyRunning, Config, ConfigError, RunLock, format_duration, load_config
from .continuity import AlertDeliveryError, ExitCodeSink, FileSink, StreamSink, check, describe, emit_alert, record_heartbeat, status_payload
from .discovery import DiscoveredSet, HttpFetcher, SeedUnreachable, discover
from .scheduler import CoverageParams, InvalidParams, RunBudget, RunReport, coverage_probability, run_submissions, shuffle, simulate_coverage
from .store import CorruptStore, IoFailure, RunLedgerEntry, StoreSnapshot, aggregate_stats, load, record_discovery, record_submission, save
from .urls import LinkClass

log = logging.getLogger("proarchiver")

EXIT_OK = 0
EXIT_STALE = 1
EXIT_AT_RISK = 2
EXIT_LAPSED = 3
EXIT_USAGE = 4
EXIT_SEED_UNREACHABLE = 5
EXIT_ALREADY_RUNNING = 6
EXIT_CORRUPT_STORE = 7
EXIT_IO_FAILURE = 8

JSON_SUMMARY_VERSION = 1
CHECKPOINT_EVERY = 100


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# flag -> config key
_FLAG_KEYS = {
    "state": "state_path",
    "endpoint": "endpoint_base",
    "seed_rng": "rng_seed",
    "mode": "mode",
    "cutoff": "cutoff",
    "url": "seed_url",
    "hosts": "internal_hosts",
    "pacing": "pacing",
    "lock": "lock_path",
    "max_pages": "max_pages",
    "politeness": "politeness_delay",
    "alert_file": "alert_file",
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--state", help="state store path (JSON lines)")
    p.add_argument("--endpoint", help="save endpoint base, e.g. https://web.archive.org")
    p.add_argument("--seed-rng", type=int, help="fix the shuffle/simulation seed")
    p.add_argument("--json", action="store_true", help="end output with a one-line JSON summary")
    p.add_argument("--mode", choices=("blind", "proactive"))
    p.add_argument("--cutoff", help="run budget, e.g. 3h55m or 600")
    p.add_argument("--respect-robots", action="store_true", help="skip pages robots.txt disallows")
    p.add_argument("--url", help="seed URL")
    p.add_argument("--hosts", help="comma-separated internal hosts (default: seed host)")
    p.add_argument("--pacing", help="pause between submissions, e.g. 5s")
    p.add_argument("--politeness", help="minimum gap between requests to one host")
    p.add_argument("--max-pages", type=int)
    p.add_argument("--lock", help="lock file path (default: <state>.lock)")
    p.add_argument("--alert-file", help="append continuity alerts to this file")
    p.add_argument("-v", "--verbose", action="count")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="proarchiver", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("discover", parents=[common], help="crawl the site and record what would be archived")
    sub.add_parser("run", parents=[common], help="discover, shuffle and submit within the budget")
    sub.add_parser("status", parents=[common], help="aggregate stats and continuity check (exit code = severity)")
    sub.add_parser("heartbeat", parents=[common], help="record a zero-work liveness entry")
    sim = sub.add_parser("simulate", parents=[common], help="analytic vs Monte Carlo coverage of shuffled runs")
    sim.add_argument("--n", type=int, default=100, help="links on the site")
    sim.add_argument("--c", type=int, default=40, help="links one run can submit")
    sim.add_argument("--r", type=int, default=6, help="runs")
    sim.add_argument("--trials", type=int, default=10_000)
    return parser


def config_from_args(args: argparse.Namespace, env: Mapping[str, str] | None = None) -> Config:
    overrides: dict[str, Any] = {}
    for flag, key in _FLAG_KEYS.items():
        if hasattr(args, flag):
            overrides[key] = getattr(args, flag)
    if getattr(args, "respect_robots", False):
        overrides["robots"] = "respect"
    return load_config(getattr(args, "config", None), env, overrides)


def _emit(args, human: list[str], summary: dict) -> None:
    for line in human:
        print(line)
    if getattr(args, "json", False):
        print(json.dumps({"v": JSON_SUMMARY_VERSION, "command": args.command, **summary}, sort_keys=True))


def _load_store(cfg: Config) -> StoreSnapshot:
    return load(cfg.state_path)


def _fetcher(cfg: Config, clock: Clock) -> HttpFetcher:
    return HttpFetcher(
        user_agent=cfg.user_agent,
        timeout=cfg.fetch_timeout,
        politeness_delay=cfg.politeness_delay,
        clock=clock,
    )


def _class_counts(found: DiscoveredSet) -> dict[str, int]:
    return {
        "pages": found.count(LinkClass.PAGE),
        "media": found.count(LinkClass.MEDIA),
        "excluded": found.count(LinkClass.EXCLUDED),
        "external": found.count(LinkClass.EXTERNAL),
    }


def cmd_discover(cfg: Config, args, clock: Clock) -> int:
    with RunLock(cfg.lock):
        store = _load_store(cfg)
        found = discover(cfg.seed(), _fetcher(cfg, clock), cfg.crawl_policy(), clock)
        record_discovery(store, found.entries, found.discovered_at)
        save(store, cfg.state_path)
    counts = _class_counts(found)
    if found.truncated:
        print(f"warning: discovery truncated at max_pages={cfg.max_pages}", file=sys.stderr)
    for url, cause in found.failures:
        print(f"warning: could not fetch {url}: {cause}", file=sys.stderr)
    human = [f"pages: {counts['pages']}, media: {counts['media']}, excluded: {counts['excluded']}"]
    human += [f"redirect: {' -> '.join(map(str, r.redirect_chain))} -> {r.final_url}" for r in found.redirects]
    _emit(
        args,
        human,
        {
            **counts,
            "total": len(found),
            "truncated": found.truncated,
            "failures": len(found.failures),
            "redirects": len(found.redirects),
            "elapsed_s": round(found.elapsed, 3),
        },
    )
    return EXIT_OK


def cmd_run(cfg: Config, args, clock: Clock) -> int:
    with RunLock(cfg.lock):
        store = _load_store(cfg)
        started_at = clock.now()
        started = clock.monotonic()
        budget = RunBudget.start(clock, cfg.cutoff)
        fetcher = _fetcher(cfg, clock)
        client = ArchiveClient(cfg.endpoint_base, cfg.user_agent, clock=clock)

        try:
            found = discover(cfg.seed(), fetcher, cfg.crawl_policy(), clock)
        except SeedUnreachable:
            store.append_run(
                RunLedgerEntry(
                    run_id=store.next_run_id(),
                    started_at=started_at,
                    wall_duration=clock.monotonic() - started,
                    in_budget_duration=0.0,
                    stopped_by="SeedUnreachable",
                    mode=cfg.mode,
                )
            )
            save(store, cfg.state_path)
            raise
        record_discovery(store, found.entries, found.discovered_at)
        save(store, cfg.state_path)

        done = 0

        def checkpoint(result) -> None:
            nonlocal done
            if cfg.mode == "blind":
                record_submission(store, result.url, result.outcome, result.at)
            done += 1
            if done % CHECKPOINT_EVERY == 0:
                save(store, cfg.state_path)

        if cfg.mode == "proactive":
            report = proactive_pass(
                found,
                fetcher,
                store,
                client,
                budget,
                clock,
                pacing=cfg.pacing,
                rng_seed=cfg.rng_seed,
                volatile=compile_patterns(cfg.volatile_patterns),
                backoff=cfg.backoff_policy(),
                on_result=checkpoint,
            )
        else:
            order = shuffle(found, cfg.rng_seed)
            report = run_submissions(
                order, client, budget, clock, pacing=cfg.pacing, backoff=cfg.backoff_policy(), on_result=checkpoint
            )

        store.append_run(
            RunLedgerEntry(
                run_id=store.next_run_id(),
                started_at=started_at,
                wall_duration=clock.monotonic() - started,
                in_budget_duration=min(budget.elapsed(clock), cfg.cutoff),
                attempted=report.attempted,
                accepted=report.accepted,
                errors=report.attempted - report.accepted,
                stopped_by=report.stopped_by.value,
                mode=cfg.mode,
            )
        )
        save(store, cfg.state_path)

    _emit(args, _report_lines(report, found), {**report.summary(), "mode": cfg.mode, "discovered": len(found)})
    return EXIT_OK


def _report_lines(report: RunReport, found: DiscoveredSet) -> list[str]:
    counts = _class_counts(found)
    lines = [
        f"discovered: {len(found)} (pages: {counts['pages']}, media: {counts['media']})",
        f"attempted: {report.attempted}, accepted: {report.accepted}, "
        f"connection errors: {report.connection_errors}, rate limited: {report.rate_limited}, "
        f"other failures: {report.other_failures}",
    ]
    if report.decisions:
        lines.append(f"unchanged: {report.unchanged}, fetch failures: {report.fetch_failures}")
    lines.append(f"elapsed: {format_duration(report.elapsed)} of {format_duration(report.cutoff)}; stopped by {report.stopped_by.value}")
    return lines


def cmd_status(cfg: Config, args, clock: Clock) -> int:
    store = _load_store(cfg)
    stats = aggregate_stats(store)
    now = clock.now()
    status = check(now, store, cfg.continuity_policy())
    hist = stats["redundancy_histogram"]
    human = [
        f"runs: {stats['total_runs']}, heartbeats: {stats['heartbeats']}",
        f"total hours: {stats['total_wall_hours']:.1f}",
        f"mean run hours: {stats['mean_run_hours']:.2f}",
        f"urls: pages {stats['urls_by_class']['page']}, media {stats['urls_by_class']['media']}",
        "archived: " + ", ".join(f"{k}x: {v}" for k, v in hist.items()),
        f"continuity: {describe(status)}",
    ]
    if stats["over_fifty"]:
        human.append(f"archived more than 50 times: {len(stats['over_fifty'])} urls")
    code = status.severity
    if status.severity:
        sinks: list = [StreamSink(sys.stderr), ExitCodeSink()]
        if cfg.alert_file:
            sinks.append(FileSink(cfg.alert_file))
        try:
            code = emit_alert(status, sinks, now)
        except AlertDeliveryError as exc:
            code = exc.exit_code
    stats = {k: v for k, v in stats.items() if k != "over_fifty"}
    stats["total_wall_hours"] = round(stats["total_wall_hours"], 3)
    _emit(args, human, {**stats, "continuity": status_payload(status)})
    return code


def cmd_heartbeat(cfg: Config, args, clock: Clock) -> int:
    with RunLock(cfg.lock):
        store = _load_store(cfg)
        entry = record_heartbeat(clock.now(), store)
        save(store, cfg.state_path)
    _emit(args, [f"heartbeat recorded (run {entry.run_id})"], {"run_id": entry.run_id})
    return EXIT_OK


def cmd_simulate(cfg: Config, args, clock: Clock) -> int:
    params = CoverageParams(args.n, args.c, args.r)
    seed = cfg.rng_seed if cfg.rng_seed is not None else 0
    analytic = coverage_probability(params)
    mixed = simulate_coverage(params, args.trials, seed, shuffled=True)
    fixed = simulate_coverage(params, args.trials, seed, shuffled=False)
    human = [
        f"N={params.n_links} C={params.per_run_capacity} R={params.n_runs} trials={args.trials}",
        f"{'':<14}{'analytic':>10}{'min':>10}{'mean':>10}{'max':>10}",
        f"{'shuffled':<14}{analytic:>10.6f}{mixed.coverage.min():>10.4f}{mixed.coverage.mean():>10.4f}{mixed.coverage.max():>10.4f}",
        f"{'fixed order':<14}{'':>10}{fixed.coverage.min():>10.4f}{fixed.coverage.mean():>10.4f}{fixed.coverage.max():>10.4f}",
        f"mean submissions per link: {mixed.mean_submissions.mean():.3f} "
        f"(expected {params.n_runs * params.per_run_capacity / params.n_links:.3f})",
        f"links never archived with fixed order: {int((fixed.coverage == 0).sum())}",
    ]
    _emit(
        args,
        human,
        {
            "analytic": analytic,
            "empirical_min": float(mixed.coverage.min()),
            "empirical_max": float(mixed.coverage.max()),
            "empirical_mean": float(mixed.coverage.mean()),
            "fixed_order_uncovered": int((fixed.coverage == 0).sum()),
            "mean_submissions": float(mixed.mean_submissions.mean()),
        },
    )
    return EXIT_OK


COMMANDS = {
    "discover": cmd_discover,
    "run": cmd_run,
    "status": cmd_status,
    "heartbeat": cmd_heartbeat,
    "simulate": cmd_simulate,
}


def main(argv: Sequence[str] | None = None, clock: Clock | None = None, env: Mapping[str, str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    verbosity = getattr(args, "verbose", 0) or 0
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbosity, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    clock = clock or SystemClock()
    try:
        cfg = config_from_args(args, os.environ if env is None else env)
        if args.command in ("discover", "run") and not cfg.seed_url:
            raise ConfigError("no seed URL: set seed_url in the config file or pass --url")
        return COMMANDS[args.command](cfg, args, clock)
    except (ConfigError, InvalidParams, UsageError) as exc:
        print(f"proarchiver: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SeedUnreachable as exc:
        print(f"proarchiver: SeedUnreachable: {exc}", file=sys.stderr)
        return EXIT_SEED_UNREACHABLE
    except AlreadyRunning as exc:
        print(f"proarchiver: AlreadyRunning: {exc}", file=sys.stderr)
        return EXIT_ALREADY_RUNNING
    except CorruptStore as exc:
        print(f"proarchiver: CorruptStore: {exc}", file=sys.stderr)
        return EXIT_CORRUPT_STORE
    except IoFailure as exc:
        print(f"proarchiver: IoFailure: {exc}", file=sys.stderr)
        return EXIT_IO_FAILURE


if __name__ == "__main__":
    sys.exit(main())
