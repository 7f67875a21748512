"""Rendering a benchmark CSV into summary tables and boxplot figures.

Takes the CSV produced by the bench runner, groups rows by the function
column, and writes a delimited summary plus Tukey box-and-whisker
figures (hinge quartiles, whiskers at 1.5 IQR, dots beyond) for run
times and generation counts.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import read_csv, tukey_summary, whisker_bounds

SUMMARY_HEADER = [
    "function",
    "runs",
    "solved",
    "metric",
    "min",
    "q1",
    "median",
    "q3",
    "max",
]


def _grouped(rows: list[dict]) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row["function"], []).append(row)
    return groups


def _solved_values(rows: list[dict], column: str) -> list[float]:
    return [float(r[column]) for r in rows if r["solved"] in ("1", 1, "True")]


def _boxplot(path: str, labels: list[str], series: list[list[float]], ylabel: str) -> None:
    stats = []
    for label, xs in zip(labels, series):
        if not xs:
            stats.append(
                {
                    "label": label,
                    "med": 0.0,
                    "q1": 0.0,
                    "q3": 0.0,
                    "whislo": 0.0,
                    "whishi": 0.0,
                    "fliers": [],
                }
            )
            continue
        summary = tukey_summary(xs)
        lo, hi = whisker_bounds(summary, xs)
        stats.append(
            {
                "label": label,
                "med": summary["median"],
                "q1": summary["q1"],
                "q3": summary["q3"],
                "whislo": lo,
                "whishi": hi,
                "fliers": [x for x in xs if x < lo or x > hi],
            }
        )
    width = max(6.0, 1.1 * len(labels) + 1.5)
    fig, ax = plt.subplots(figsize=(width, 4.2))
    ax.bxp(stats, showfliers=True)
    ax.set_ylabel(ylabel)
    ax.grid(axis="y", alpha=0.3)
    fig.autofmt_xdate(rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(csv_path: str, out_dir: str) -> list[str]:
    """Write summary.csv plus one figure per metric; returns the paths."""
    rows = read_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} has no benchmark rows")
    os.makedirs(out_dir, exist_ok=True)
    groups = _grouped(rows)
    labels = list(groups)

    written: list[str] = []
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for label in labels:
            group = groups[label]
            solved = sum(1 for r in group if r["solved"] in ("1", 1, "True"))
            for metric in ("seconds", "generations"):
                values = _solved_values(group, metric)
                if values:
                    s = tukey_summary(values)
                    row = [s["min"], s["q1"], s["median"], s["q3"], s["max"]]
                else:
                    row = ["", "", "", "", ""]
                writer.writerow([label, len(group), solved, metric, *row])
    written.append(summary_path)

    for metric, ylabel, fname in (
        ("seconds", "run time (s, solved runs)", "run_times.png"),
        ("generations", "generations (solved runs)", "generations.png"),
    ):
        series = [_solved_values(groups[label], metric) for label in labels]
        fig_path = os.path.join(out_dir, fname)
        _boxplot(fig_path, labels, series, ylabel)
        written.append(fig_path)
    return written
