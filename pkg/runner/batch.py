"""
Batch commands behind main.py: run, report, acceptance, plot.

Repetitions of a scenario are independent and run in a process pool whose
size comes from the MERGEPLAN_THREADS environment variable (default 1).
"""
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config import CONFIG, RunConfig
from env.scenario import build_map_rules, load_scenario
from errors import EmptyBatch, MergePlannerError, error_report
from evaluation.maneuvers import RunLog
from runner.closed_loop import RunOutcome, run_closed_loop
from runner.recorder import RunRecorder, write_json

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["scenario", "seed", "category", "t_f", "min_d_lane", "max_jerk_smoothed",
                  "max_jerk_raw", "planned_max_jerk", "plan_ms_median", "plan_ms_p95", "track_ms_median"]


def worker_count() -> int:
    value = os.environ.get(CONFIG.threads_env, "1")
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning("ignoring %s=%r, expected an integer", CONFIG.threads_env, value)
        return 1


@dataclass
class RunStatus:
    run_dir: str
    seed: int
    ok: bool
    category: Optional[str] = None
    error: Optional[dict] = None


def run_one(run_cfg: RunConfig, rep: int) -> RunStatus:
    """Execute repetition ``rep`` and write its artifacts; errors go to error.json."""
    scenario = load_scenario(run_cfg.scenario)
    seed = (scenario.seed if run_cfg.seed is None else run_cfg.seed) + rep
    run_dir = Path(run_cfg.out_dir) / scenario.name / f"rep_{rep:03d}"
    recorder = RunRecorder(run_dir)
    try:
        outcome = run_closed_loop(scenario, run_cfg, seed)
    except MergePlannerError as exc:
        logger.error("%s rep %d failed: %s", scenario.name, rep, exc)
        report = error_report(exc)
        write_json(run_dir / "error.json", report)
        return RunStatus(str(run_dir), seed, False, error=report)
    for c in outcome.cycles:
        recorder.add_cycle(c.t, c.ego.s, c.result, c.plan_ms, c.track_ms, c.tracker_fallback)
    meta = {"scenario": scenario.name, "seed": seed, "v0": outcome.v0}
    recorder.save(outcome.log, outcome.metrics, meta)
    return RunStatus(str(run_dir), seed, True, category=outcome.metrics.get("category"))


def run(run_cfg: RunConfig) -> List[RunStatus]:
    """
    Run all repetitions of one scenario.

    Raises:
        ScenarioError: the scenario file does not validate (checked before any run).
    """
    scenario = load_scenario(run_cfg.scenario)
    workers = min(worker_count(), run_cfg.reps)
    logger.info("running %s x%d with %d worker(s)", scenario.name, run_cfg.reps, workers)
    if workers == 1:
        return [run_one(run_cfg, rep) for rep in range(run_cfg.reps)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, [run_cfg] * run_cfg.reps, range(run_cfg.reps)))


def collect(out_dir) -> pd.DataFrame:
    """
    One row per completed run below out_dir.

    Raises:
        EmptyBatch: no metrics.json found.
    """
    rows = []
    for path in sorted(Path(out_dir).rglob("metrics.json")):
        with open(path) as f:
            metrics = json.load(f)
        timing_path = path.with_name("timing.json")
        if timing_path.exists():
            with open(timing_path) as f:
                metrics.update(json.load(f).get("summary", {}))
        metrics["run_dir"] = str(path.parent)
        rows.append(metrics)
    if not rows:
        raise EmptyBatch(f"no completed runs below {out_dir}")
    frame = pd.DataFrame(rows)
    for column in REPORT_COLUMNS:
        if column not in frame.columns:
            frame[column] = np.nan
    return frame[REPORT_COLUMNS + ["run_dir"]]


def report(out_dir) -> Dict[str, pd.DataFrame]:
    """
    Aggregate tables of a batch, written as report.csv (per run),
    report_categories.csv and report.txt.
    """
    out_dir = Path(out_dir)
    runs = collect(out_dir)
    grouped = runs.groupby(runs["category"].fillna("unfinished"))
    categories = pd.DataFrame({
        "runs": grouped.size(),
        "t_f_mean": grouped["t_f"].mean(),
        "t_f_spread": grouped["t_f"].max() - grouped["t_f"].min(),
        "min_d_lane": grouped["min_d_lane"].min(),
        "max_jerk_smoothed": grouped["max_jerk_smoothed"].max(),
        "plan_ms_median": grouped["plan_ms_median"].median(),
    })
    d = runs["min_d_lane"]
    lane = pd.DataFrame({
        "runs": [len(d)],
        "positive": [int((d > 0).sum())],
        "in_20_40cm": [int(((d >= 0.2) & (d <= 0.4)).sum())],
        "below_margin": [int((d < CONFIG.evaluation.min_lane_margin).sum())],
        "min": [d.min()],
        "median": [d.median()],
    })
    plan = runs["plan_ms_median"].dropna()
    timing = pd.DataFrame({"p50": [plan.quantile(0.5) if len(plan) else np.nan],
                           "p95": [plan.quantile(0.95) if len(plan) else np.nan],
                           "max": [plan.max() if len(plan) else np.nan]})

    runs.to_csv(out_dir / "report.csv", index=False, float_format="%.4f")
    categories.to_csv(out_dir / "report_categories.csv", float_format="%.4f")
    with open(out_dir / "report.txt", "w") as f:
        f.write("per category\n" + categories.to_string(float_format="%.3f") + "\n\n")
        f.write("min d_Lane [m]\n" + lane.to_string(index=False, float_format="%.3f") + "\n\n")
        f.write("planning time per run median [ms]\n" + timing.to_string(index=False, float_format="%.2f") + "\n")
    return {"runs": runs, "categories": categories, "lane": lane, "timing": timing}


def plot(out_dir) -> List[Path]:
    """s(t) of every run, one PNG per category, with yield line and PGA marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    runs = collect(out_dir)
    written = []
    for category, group in runs.groupby(runs["category"].fillna("unfinished")):
        fig, ax = plt.subplots(figsize=(7, 4))
        marks = {}
        for run_dir in group["run_dir"]:
            log = RunLog.from_csv(Path(run_dir) / "trajectory.csv")
            ax.plot(log.t, log.s, linewidth=1.0)
            with open(Path(run_dir) / "metrics.json") as f:
                marks.update(json.load(f).get("marks") or {})
        for name, value in sorted(marks.items()):
            ax.axhline(value, color="gray", linestyle="--", linewidth=0.8)
            ax.text(0.0, value, name, va="bottom", fontsize=8)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("s [m]")
        ax.set_title(f"{category} ({len(group)} runs)")
        ax.grid(True, alpha=0.3)
        path = out_dir / f"timing_{category}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def _spread(values) -> float:
    values = [v for v in values if v is not None]
    return float(max(values) - min(values)) if values else float("nan")


def _fastest(finish_times: dict, name: str, tolerance: float) -> dict:
    """The named scenario's median t_f is not above any other scenario's median."""
    own = finish_times.get(name) or []
    medians = {k: float(np.median(v)) for k, v in finish_times.items() if v and k != name}
    reference = float(np.median(own)) if own else None
    slower = sorted(k for k, m in medians.items() if reference is not None and reference > m + tolerance)
    return {"passed": reference is not None and not slower, "t_f_median": reference, "faster": slower}


def check_fail_safe(outcome: RunOutcome, scenario, a_min: float) -> bool:
    """
    Every plan returned at the junction stops at or before the yield line, and
    braking at a_min from any of its states stops there too.
    """
    s_stop = scenario.s_stop()
    tol = 1e-3
    for cycle in outcome.cycles:
        if cycle.result.behavior.kind.value == "lane_follow":
            continue
        traj = cycle.result.trajectory
        t, s, v, _ = traj.sample(0.05)
        end = traj.state_at(traj.duration)
        if end.s > s_stop + tol or end.v > 1e-3:
            return False
        if np.any(s + v ** 2 / (2.0 * abs(a_min)) > s_stop + tol):
            return False
    return True


def acceptance(suite_path, out_dir: Optional[str] = None) -> dict:
    """
    Run the acceptance suite and evaluate its criteria.

    The suite lists scenarios (relative to the suite file) with repetitions and
    the checks to apply; results go to ``<out_dir>/acceptance.json``.
    """
    suite_path = Path(suite_path)
    with open(suite_path) as f:
        suite = json.load(f)
    out_dir = Path(out_dir or suite.get("out_dir", "runs/acceptance"))
    results = {}
    spreads = {}
    finish_times = {}
    plan_times = []

    for entry in suite["runs"]:
        scenario_path = suite_path.parent / entry["scenario"]
        scenario = load_scenario(scenario_path)
        reps = int(entry.get("reps", 10))
        checks = entry.get("checks", [])
        outcomes = []
        errors = []
        for rep in range(reps):
            try:
                outcomes.append(run_closed_loop(scenario, RunConfig(scenario=str(scenario_path)), scenario.seed + rep))
            except MergePlannerError as exc:
                errors.append(error_report(exc))
        categories = [o.metrics.get("category") for o in outcomes]
        t_f = [o.metrics.get("t_f") for o in outcomes]
        spreads[scenario.name] = _spread(t_f)
        finish_times[scenario.name] = [t for t in t_f if t is not None]
        plan_times += [c.plan_ms for o in outcomes for c in o.cycles]
        row = {
            "runs": len(outcomes),
            "errors": errors,
            "categories": categories,
            "t_f_spread": spreads[scenario.name],
            "min_d_lane": min((o.metrics["min_d_lane"] for o in outcomes), default=None),
            "max_planned_jerk": max((o.metrics["planned_max_jerk"] or 0.0 for o in outcomes), default=None),
        }
        passed = not errors
        expected = entry.get("expected_category", scenario.expected_category)
        if expected is not None:
            passed &= all(c == expected for c in categories)
        if "categories" in entry:
            passed &= all(c in entry["categories"] for c in categories)
        if "spread" in checks:
            passed &= row["t_f_spread"] <= entry.get("max_spread", 0.15)
        if "lane" in checks:
            passed &= row["min_d_lane"] is not None and row["min_d_lane"] > 0
        if "comfort" in checks:
            passed &= row["max_planned_jerk"] is not None and row["max_planned_jerk"] <= CONFIG.evaluation.comfort_jerk
        if "standstill" in checks:
            passed &= all(o.metrics.get("standstill") for o in outcomes)
        if "fail_safe" in checks:
            a_min = build_map_rules(scenario).a_min
            passed &= all(check_fail_safe(o, scenario, a_min) for o in outcomes)
        row["passed"] = bool(passed)
        results[scenario.name] = row
        logger.info("acceptance %s: %s", scenario.name, "OK" if passed else "FAIL")

    for ratio in suite.get("spread_ratios", []):
        wide, narrow = spreads.get(ratio["wide"]), spreads.get(ratio["narrow"])
        ok = wide is not None and narrow is not None and wide >= ratio.get("factor", 4.0) * max(narrow, 1e-3)
        results[f"spread_ratio:{ratio['wide']}/{ratio['narrow']}"] = {"passed": bool(ok), "wide": wide,
                                                                       "narrow": narrow}

    fastest = suite.get("fastest")
    if fastest:
        results[f"fastest:{fastest['scenario']}"] = _fastest(finish_times, fastest["scenario"],
                                                             fastest.get("tolerance", 0.15))

    median = float(np.median(plan_times)) if plan_times else float("nan")
    results["performance"] = {"passed": bool(plan_times) and median <= suite.get("plan_ms_gate", 50.0),
                              "plan_ms_median": median, "reference_ms": 16.0,
                              "plan_ms_p95": float(np.percentile(plan_times, 95)) if plan_times else None}
    summary = {"passed": all(r["passed"] for r in results.values()), "results": results}
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "acceptance.json", summary)
    return summary
