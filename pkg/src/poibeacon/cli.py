"""Command line: ``discover``, ``simulate``, ``crawl`` and ``sweep``.

Diagnostics go to stderr; results go to files under ``--out``. Exit code
0 means the command completed, 1 a bad input or lineage mismatch, 2 a
usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .confidence import filter_pois
from .crawler import bfs_crawl, classify_peers, sweep_csv
from .dataset import DataClass, PeerAddress, load_peer_list
from .pipeline import analyze, prepare_session
from .report import (ReportError, dump_json, export_records, load_poi_report, poi_report,
                     read_socket_peers, socket_log_lines)
from .sim.profile import FIXTURES, ProfileError, fixture_path, load_profile
from .trace import TraceFilterConfig, TraceFormatError, apply_filter, read_trace, save_trace

log = logging.getLogger("poibeacon")

RUN_FILE = "run.json"


class CliError(Exception):
    pass


def _threshold(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in [0, 1], got {text}")
    return v


def _thresholds(text: str) -> list[float]:
    return [_threshold(t) for t in text.split(",") if t.strip()]


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _load_profile(args):
    path = Path(args.profile) if args.profile else None
    if path is not None and not path.exists() and args.profile in FIXTURES:
        path = fixture_path(args.profile)
    if path is None:
        raise CliError("--profile is required (a profile file or one of " + ", ".join(FIXTURES) + ")")
    profile = load_profile(path)
    if args.max_trace_count is not None:
        profile.trace_filter = replace(profile.trace_filter, max_trace_count=args.max_trace_count)
    return profile


def cmd_discover(args) -> None:
    try:
        trace = read_trace(args.trace)
        bootstrap = load_peer_list(args.bootstrap)
        socket_peers = read_socket_peers(args.socket_log) if args.socket_log else set()
    except (OSError, TraceFormatError, ReportError, ValueError) as exc:
        raise CliError(str(exc)) from None
    if args.max_trace_count is not None:
        trace = list(apply_filter(trace, TraceFilterConfig(max_trace_count=args.max_trace_count)))
    run_id = args.run_id
    sidecar = Path(args.trace).parent / RUN_FILE
    if run_id is None and sidecar.exists():
        run_id = json.loads(sidecar.read_text(encoding="utf-8")).get("run_id")
    result = analyze(trace, bootstrap, socket_peers)
    scored = result.scored
    if args.threshold is not None:
        scored = filter_pois(scored, args.threshold)
    summary = {
        "entries": result.discovery.entries,
        "ip_patterns": len(result.dataset.ip_patterns),
        "port_patterns": len(result.dataset.port_patterns),
        "known_peers": len(result.dataset.known_peers),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(poi_report(scored, result.mapping, run_id, args.threshold, summary), out / "pois.json")
    dump_json(export_records(scored), out / "pois.export.json")
    log.info("%d POIs written to %s", len(scored), out)


def cmd_simulate(args) -> None:
    profile = _load_profile(args)
    if args.t_trace is not None and args.t_trace < profile.mm_cycle_ticks:
        raise CliError(f"T_trace={args.t_trace} is shorter than one MM cycle ({profile.mm_cycle_ticks} ticks)")
    session = prepare_session(profile, args.seed, t_trace=args.t_trace)
    run = session.collection
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_trace(run.trace, out / "trace.jsonl")
    (out / "socket_log.jsonl").write_text(socket_log_lines(run.socket_log), encoding="utf-8")
    (out / "bootstrap.txt").write_text(profile.bootstrap_text(), encoding="utf-8")
    dump_json({"run_id": session.run_id, "profile": profile.name, "seed": args.seed}, out / RUN_FILE)
    dump_json({
        "run_id": session.run_id,
        "shared": sorted(str(p) for p in run.shared_ground_truth),
        "local": sorted(str(p) for p in session.botnet.local),
        "bootstrap": [str(p) for p in session.botnet.bootstrap],
    }, out / "ground_truth.json")
    log.info("%d trace entries, %d socket events written to %s", len(run.trace), len(run.socket_log), out)


def cmd_crawl(args) -> None:
    profile = _load_profile(args)
    try:
        obj = json.loads(Path(args.pois).read_text(encoding="utf-8"))
        scored, mapping, run_id = load_poi_report(obj)
    except (OSError, json.JSONDecodeError, ReportError) as exc:
        raise CliError(f"{args.pois}: {exc}") from None
    expected = profile.run_id(args.seed)
    if run_id != expected:
        raise CliError(f"POI report belongs to run {run_id}, not {expected}: "
                       "POIs are only valid for the profile/seed they were discovered on")
    session = prepare_session(profile, args.seed)
    threshold = args.threshold if args.threshold is not None else 0.8
    ip_pois = filter_pois([s for s in scored if s.key.data_class is DataClass.IP
                           and not s.key.kind.is_contiguous], threshold)
    port_pois = [s.candidate for s in scored if s.key.data_class is DataClass.PORT]
    counter = iter(range(args.budget))

    def primitive(peer: PeerAddress):
        return session.puppeteer.crawl(peer, ip_pois, mapping, port_pois,
                                       seed=session.crawl_seed(next(counter)))

    discovered, cycles = bfs_crawl(primitive, profile.bootstrap, args.budget)
    boot, local = session.botnet.bootstrap, session.botnet.local
    records = []
    for c in cycles:
        cats = classify_peers(c.result.peers, boot, local)
        records.append({
            "cycle": c.index,
            "crawl_peer": str(c.crawl_peer),
            "extracted": len(c.result.peers),
            "correct": len(cats.correct),
            "bootstrap": len(cats.bootstrap_only),
            "wrong": len(cats.wrong),
            "new": [str(p) for p in c.new_peers],
            "diagnostics": c.result.diagnostics,
        })
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_json({
        "run_id": expected,
        "threshold": threshold,
        "budget": args.budget,
        "cycles": records,
        "discovered": sorted(str(p) for p in discovered),
    }, out)
    log.info("%d cycles, %d peers discovered", len(cycles), len(discovered))


def cmd_sweep(args) -> None:
    profile = _load_profile(args)
    session = prepare_session(profile, args.seed)
    rows = session.sweep(args.thresholds, args.cycles)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(sweep_csv(rows), encoding="utf-8")
    dump_json({"run_id": session.run_id, "profile": profile.name, "seed": args.seed,
               "cycles": args.cycles}, out.with_name(out.name + ".run.json"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poibeacon", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threshold=True):
        sp.add_argument("--seed", type=_seed, default=0)
        if threshold:
            sp.add_argument("--threshold", type=_threshold, default=None)
        sp.add_argument("--out", required=True)
        sp.add_argument("--max-trace-count", type=_positive, default=None)

    d = sub.add_parser("discover", help="find and score POIs in a trace")
    d.add_argument("--trace", required=True)
    d.add_argument("--bootstrap", required=True)
    d.add_argument("--socket-log")
    d.add_argument("--run-id", help="lineage id to embed (default: from run.json next to the trace)")
    common(d)
    d.set_defaults(func=cmd_discover)

    s = sub.add_parser("simulate", help="run the puppet on a local botnet and record a trace")
    s.add_argument("--profile", required=True, help="profile file or fixture name")
    s.add_argument("--t-trace", type=_positive)
    common(s, threshold=False)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("crawl", help="BFS crawl with POIs from a discover report")
    c.add_argument("--profile", required=True)
    c.add_argument("--pois", required=True)
    c.add_argument("--budget", type=_positive, default=50)
    common(c)
    c.set_defaults(func=cmd_crawl)

    w = sub.add_parser("sweep", help="category counts over a range of thresholds")
    w.add_argument("--profile", required=True)
    w.add_argument("--thresholds", type=_thresholds, default=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    w.add_argument("--cycles", type=_positive, default=100)
    common(w, threshold=False)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (CliError, ProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
