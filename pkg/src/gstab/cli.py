"""Command line entry point: ``gstab run|compare|check|schedules``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checker import adversarial_schedules, check_trace, run_schedule
from .harness import ExperimentConfig, compare_modes, emit_csv, emit_json, resolve_topology, run_experiment
from .trace import Trace, TraceFormatError


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0-9"``, ``"1,4,7"`` or a mix such as ``"0-2,10"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, part)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return tuple(out)


def parse_groups(text: str) -> tuple[tuple[int, ...], ...]:
    """Groups separated by ``;``, servers by ``,``: ``"0,1;2"``."""
    return tuple(tuple(int(x) for x in g.split(",") if x.strip()) for g in text.split(";") if g.strip())


def _experiment_args(p: argparse.ArgumentParser, mode: bool = True) -> None:
    p.add_argument("--topology", default="ring:10", help="ring:N or a YAML/JSON topology file")
    if mode:
        p.add_argument("--mode", default="full", help="full (alias ours), basic, general or gentlerain")
    p.add_argument("--hb-hz", type=float, default=10)
    p.add_argument("--stab-hz", type=float, default=1000)
    p.add_argument("--lst-hz", type=float, default=1000)
    p.add_argument("--delay-ms", type=int, default=0)
    p.add_argument("--skew-ms", type=float, default=0)
    p.add_argument("--put-rate", type=float, default=100, help="PUTs per second per server")
    p.add_argument("--get-rate", type=float, default=0)
    p.add_argument("--duration-ms", type=int, default=1000)
    p.add_argument("--seeds", type=parse_seeds, default=(0,), help="e.g. 0-9 or 1,2,3")
    p.add_argument("--groups", type=parse_groups, default=None, help="general mode groups, e.g. 0,1;2")
    p.add_argument("--no-check", action="store_true", help="skip the trace checker")
    p.add_argument("--out", type=Path, default=None, help="directory for results.csv and summary.json")


def _config(args, mode: str) -> ExperimentConfig:
    return ExperimentConfig(
        topology=args.topology, mode=mode, hb_hz=args.hb_hz, stab_hz=args.stab_hz, lst_hz=args.lst_hz,
        delay_ms=args.delay_ms, skew_ms=args.skew_ms, put_rate=args.put_rate, get_rate=args.get_rate,
        duration_ms=args.duration_ms, seeds=args.seeds, groups=args.groups, check=not args.no_check,
    )


def _write(out: Path | None, report, traces=None) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(report, out / "results.csv")
    emit_json(report, out / "summary.json")


def cmd_run(args) -> int:
    cfg = _config(args, args.mode)
    report = run_experiment(cfg, trace_dir=args.out / "traces" if args.out and args.traces else None)
    for r in report.runs:
        print(f"{r.mode} n={r.n} seed={r.seed} mean={r.mean_lat_ms}ms p99={r.p99_lat_ms}ms "
              f"msgs={r.msgs_total} {r.verdict}")
        if r.verdict == "FAIL":
            print("  " + r.report.summary().replace("\n", "\n  "))
    print(f"mean latency over seeds: {report.mean_latency:.4f} ms")
    _write(args.out, report)
    return 0 if report.ok else 1


def cmd_compare(args) -> int:
    cfg = _config(args, args.modes[0])
    comp = compare_modes(cfg, args.modes)
    print(comp.table())
    _write(args.out, comp)
    failed = [r for r in comp.runs if r.verdict == "FAIL"]
    for r in failed:
        print(f"checker FAIL: {r.mode} seed={r.seed}")
    return 1 if failed else 0


def cmd_check(args) -> int:
    code = 0
    for path in args.traces:
        try:
            trace = Trace.load(path)
        except (OSError, TraceFormatError) as exc:
            print(f"{path}: cannot read trace: {exc}", file=sys.stderr)
            code = 2
            continue
        report = check_trace(trace, liveness=args.liveness)
        if args.json:
            print(json.dumps({"trace": str(path), **report.to_dict()}, sort_keys=True))
        else:
            print(f"{path}: {'PASS' if report.ok else 'FAIL'}")
            print("  " + report.summary().replace("\n", "\n  "))
        if not report.ok and code == 0:
            code = 1
    return code


def cmd_schedules(args) -> int:
    spec = resolve_topology(args.topology)
    code = 0
    for s in adversarial_schedules(spec):
        if not s.available:
            print(s.describe())
            continue
        out = run_schedule(s)
        status = "PASS" if out.ok else "FAIL"
        print(f"{s.name}: {status} ({'realized' if out.realized else 'chain not realized'})")
        if not out.ok:
            code = 1
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gstab", description="Stabilization experiments for partially replicated causal stores")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one mode over a list of seeds")
    _experiment_args(p)
    p.add_argument("--traces", action="store_true", help="also write every trace under OUT/traces")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="paired-seed comparison of several modes")
    _experiment_args(p, mode=False)
    p.add_argument("--modes", nargs="+", default=["full", "gentlerain"])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", help="run the checker on trace files")
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--liveness", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("schedules", help="run the adversarial schedules for a topology")
    p.add_argument("--topology", default="ring:3")
    p.set_defaults(func=cmd_schedules)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
