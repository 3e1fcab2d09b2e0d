"""Command-line interface: run missions, verify replays, print metrics."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MISSION_FAILED = 3
EXIT_IO = 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="subsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a mission scenario")
    run_p.add_argument("scenario")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--headless", action="store_true",
                       help="force operator channel off")
    run_p.add_argument("--gate", choices=["on", "off"], default=None)
    run_p.add_argument("--ltm", default=None, help="long-term memory file (read+write)")
    run_p.add_argument("--out", default=None, help="artifact output directory")
    run_p.add_argument("--serve", type=int, default=None, metavar="PORT",
                       help="serve the operator gateway on this port")

    replay_p = sub.add_parser("replay", help="recompute and verify a run's digest")
    replay_p.add_argument("run_dir")

    metrics_p = sub.add_parser("metrics", help="print a run's metrics report")
    metrics_p.add_argument("run_dir")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "replay":
        return _cmd_replay(args)
    return _cmd_metrics(args)


def _cmd_run(args) -> int:
    import dataclasses

    from .memory import LongTermMemory
    from .mission import MissionFailed, export_artifacts, run_mission
    from .scenario import ParseError, ValidationError, load_scenario

    try:
        cfg = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, ValidationError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION

    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed,
                                  mission_id=f"{cfg.name}-{args.seed}")
    if args.gate is not None:
        gate = args.gate == "on"
        cfg = dataclasses.replace(cfg, gate_enabled=gate,
                                  loops=dataclasses.replace(cfg.loops,
                                                            gate_enabled=gate))
    if args.headless:
        cfg = dataclasses.replace(cfg, operator_enabled=False)

    ltm = None
    if args.ltm and Path(args.ltm).exists():
        ltm = LongTermMemory.load(args.ltm)

    gateway = None
    if args.serve is not None and cfg.operator_enabled:
        from .gateway import Gateway
        gateway = Gateway(port=args.serve).start()

    try:
        result = run_mission(cfg, ltm=ltm, gateway=gateway)
    except MissionFailed as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSION_FAILED
    finally:
        if gateway is not None:
            gateway.stop()

    if args.ltm:
        result.ltm.save(args.ltm)
    if args.out:
        try:
            export_artifacts(args.out, result)
        except OSError as exc:
            print(f"io_error: {exc}", file=sys.stderr)
            return EXIT_IO
    print(json.dumps(result.report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_replay(args) -> int:
    from .mission import digest_from_trajectory_file
    run_dir = Path(args.run_dir)
    try:
        recomputed = digest_from_trajectory_file(run_dir / "trajectory.jsonl")
        stored = json.loads((run_dir / "metrics.json").read_text())["trajectory_digest"]
    except OSError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return EXIT_IO
    if recomputed == stored:
        print(f"digest ok: {recomputed}")
        return EXIT_OK
    print(f"digest mismatch: stored {stored} recomputed {recomputed}",
          file=sys.stderr)
    return EXIT_MISSION_FAILED


def _cmd_metrics(args) -> int:
    try:
        report = json.loads((Path(args.run_dir) / "metrics.json").read_text())
    except OSError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
