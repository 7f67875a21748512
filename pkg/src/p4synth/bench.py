"""Benchmark runner: repeated seeded synthesis runs, CSV out.

Every run is one evolve() call with its own seed; rows land in a CSV
with the schema

    function,seed,seconds,generations,restarts,solved

A parameter sweep reuses the same schema and encodes the swept setting
into the function column as `<fn>@KEY=value`.  Quartiles for summaries
use Tukey's hinges (the halves include the median when the count is
odd), matching the way these runs are boxplotted.
"""

from __future__ import annotations

import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .engine import GpParams, TimeBudgetExceeded, evolve
from .rules import parse_rules

CSV_HEADER = ["function", "seed", "seconds", "generations", "restarts", "solved"]


@dataclass(frozen=True)
class BenchJob:
    label: str
    rules_text: str
    params: GpParams


def run_one(job: BenchJob) -> dict:
    """One synthesis run reduced to a CSV row."""
    started = time.perf_counter()
    try:
        ruleset = parse_rules(job.rules_text)
        _, stats = evolve(ruleset, job.params)
        solved = 1
    except TimeBudgetExceeded as exc:
        stats = exc.stats
        solved = 0
    except Exception as exc:  # a failed run is a row, not a crash
        print(f"[bench] {job.label} seed={job.params.seed}: {exc}", file=sys.stderr)
        return {
            "function": job.label,
            "seed": job.params.seed,
            "seconds": round(time.perf_counter() - started, 3),
            "generations": 0,
            "restarts": 0,
            "solved": 0,
        }
    return {
        "function": job.label,
        "seed": job.params.seed,
        "seconds": round(time.perf_counter() - started, 3),
        "generations": stats.generations_total,
        "restarts": stats.restarts,
        "solved": solved,
    }


def run_suite(jobs: list[BenchJob], jobs_parallel: int = 1) -> list[dict]:
    """Run every job, in order, optionally across worker processes."""
    if jobs_parallel <= 1:
        return [run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=jobs_parallel) as pool:
        return list(pool.map(run_one, jobs, chunksize=1))


def make_jobs(
    functions: list[tuple[str, str]],
    reps: int,
    base_params: GpParams,
    base_seed: int = 0,
    sweep: tuple[str, list] | None = None,
) -> list[BenchJob]:
    """The cross product of functions, sweep points, and repetitions.

    functions is a list of (label, rules_text).  Seeds count up from
    base_seed so a suite is reproducible end to end.
    """
    variants: list[tuple[str, GpParams]]
    if sweep is None:
        variants = [("", base_params)]
    else:
        key, values = sweep
        variants = [
            (f"@{key}={value}", base_params.with_overrides(**{key: value}))
            for value in values
        ]
    out: list[BenchJob] = []
    seed = base_seed
    for label, rules_text in functions:
        for suffix, params in variants:
            for _ in range(reps):
                out.append(
                    BenchJob(
                        label=label + suffix,
                        rules_text=rules_text,
                        params=params.with_overrides(seed=seed),
                    )
                )
                seed += 1
    return out


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# === Tukey five-number summaries ====================================

def _median(sorted_xs: list[float]) -> float:
    n = len(sorted_xs)
    mid = n // 2
    if n % 2:
        return sorted_xs[mid]
    return (sorted_xs[mid - 1] + sorted_xs[mid]) / 2


def tukey_summary(xs: list[float]) -> dict:
    """min, hinges, median, max; halves include the median when n is odd."""
    if not xs:
        raise ValueError("no data")
    s = sorted(xs)
    half = (len(s) + 1) // 2
    return {
        "min": s[0],
        "q1": _median(s[:half]),
        "median": _median(s),
        "q3": _median(s[len(s) - half :]),
        "max": s[-1],
    }


def whisker_bounds(summary: dict, xs: list[float]) -> tuple[float, float]:
    """Farthest data points within 1.5 IQR of the hinges."""
    iqr = summary["q3"] - summary["q1"]
    lo_fence = summary["q1"] - 1.5 * iqr
    hi_fence = summary["q3"] + 1.5 * iqr
    inside = [x for x in xs if lo_fence <= x <= hi_fence]
    return min(inside), max(inside)
