"""Merge Planner - Main Entry Point"""
import argparse
import json
import logging
import sys
from pathlib import Path

from config import RunConfig
from errors import MergePlannerError, error_report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Context-aware merge planner: closed-loop junction simulation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py run scenarios/no_traffic.json --reps 3      Simulate and write run artifacts
  python main.py report runs                                 Aggregate tables of a batch
  python main.py acceptance scenarios/suite.json             Run the acceptance suite
  python main.py plot runs                                   s(t) figures per category

Set MERGEPLAN_THREADS to run repetitions in parallel.
        """
    )
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Simulate a scenario")
    run_p.add_argument("scenario")
    run_p.add_argument("--reps", type=int, default=1)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default="runs")
    run_p.add_argument("--hz", type=float, default=10.0)
    run_p.add_argument("--duration", type=float, default=None)

    report_p = sub.add_parser("report", help="Aggregate a batch directory")
    report_p.add_argument("out_dir")

    acc_p = sub.add_parser("acceptance", help="Run the acceptance suite")
    acc_p.add_argument("suite")
    acc_p.add_argument("--out", default=None)

    plot_p = sub.add_parser("plot", help="Position-over-time figures")
    plot_p.add_argument("out_dir")

    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "run":
        return run_scenario(args)
    if args.command == "report":
        return report_batch(args.out_dir)
    if args.command == "acceptance":
        return run_acceptance(args.suite, args.out)
    return plot_batch(args.out_dir)


def _fail(exc: BaseException, out_dir) -> int:
    """Print the failure and leave a machine-readable error.json behind."""
    report = error_report(exc)
    print(f"  [FAIL] {report['error']}: {report['message']}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "error.json", "w") as f:
        json.dump(report, f, indent=2)
    return 2


def run_scenario(args) -> int:
    from runner.batch import run

    print("=" * 60)
    print("MERGE PLANNER - CLOSED-LOOP RUN")
    print("=" * 60)
    try:
        cfg = RunConfig(scenario=args.scenario, cycles_hz=args.hz, duration=args.duration,
                        out_dir=args.out, reps=args.reps, seed=args.seed)
    except ValueError as exc:
        return _fail(exc, args.out)

    print(f"\n[1/2] Loading {args.scenario} ...")
    try:
        statuses = run(cfg)
    except MergePlannerError as exc:
        return _fail(exc, args.out)

    print(f"\n[2/2] Ran {len(statuses)} repetition(s)")
    failed = 0
    for status in statuses:
        if status.ok:
            print(f"  [OK] seed {status.seed}: {status.category} -> {status.run_dir}")
        else:
            failed += 1
            print(f"  [FAIL] seed {status.seed}: {status.error['error']} ({status.error['message']})")
    print("\n" + "=" * 60)
    return 1 if failed else 0


def report_batch(out_dir) -> int:
    from runner.batch import report

    print("=" * 60)
    print("MERGE PLANNER - BATCH REPORT")
    print("=" * 60)
    try:
        tables = report(out_dir)
    except MergePlannerError as exc:
        return _fail(exc, out_dir)
    print(tables["categories"].to_string(float_format="%.3f"))
    print()
    print(tables["lane"].to_string(index=False, float_format="%.3f"))
    print(f"\nWritten: {Path(out_dir) / 'report.csv'}, {Path(out_dir) / 'report.txt'}")
    return 0


def run_acceptance(suite, out) -> int:
    from runner.batch import acceptance

    print("=" * 60)
    print("MERGE PLANNER - ACCEPTANCE SUITE")
    print("=" * 60)
    try:
        summary = acceptance(suite, out)
    except MergePlannerError as exc:
        return _fail(exc, out or "runs/acceptance")
    results = summary["results"]
    for i, (name, result) in enumerate(results.items(), 1):
        mark = "[OK]" if result["passed"] else "[FAIL]"
        print(f"[{i}/{len(results)}] {name}")
        print(f"  {mark} " + ", ".join(f"{k}={v}" for k, v in result.items()
                                       if k not in ("passed", "errors", "categories")))
    print("\n" + "=" * 60)
    print("All criteria passed." if summary["passed"] else "Some criteria failed.")
    print("=" * 60)
    return 0 if summary["passed"] else 1


def plot_batch(out_dir) -> int:
    from runner.batch import plot

    try:
        paths = plot(out_dir)
    except MergePlannerError as exc:
        return _fail(exc, out_dir)
    for path in paths:
        print(f"  [OK] {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
