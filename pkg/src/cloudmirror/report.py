"""Render a deviation report as delimited output and comparison figures."""

from __future__ import annotations

import csv
from pathlib import Path

from .anomaly import DeviationReport
from .telemetry import TimeSeries, align

CSV_COLUMNS = [
    "subject", "metric", "status", "buckets", "max_abs_deviation",
    "mean_abs_deviation", "anomalous", "intervals", "first_onset_micros",
]


def write_report_csv(report: DeviationReport, path: str | Path) -> Path:
    """One row per subject; coverage gaps carry their reason in 'status'."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for s in report.subjects:
            onset = s.intervals[0].start_us if s.intervals else ""
            writer.writerow(
                [
                    s.subject, s.metric, "ok", s.buckets,
                    f"{s.max_abs:.6f}", f"{s.mean_abs:.6f}",
                    "yes" if s.anomalous else "no", len(s.intervals), onset,
                ]
            )
        for g in report.coverage_gaps:
            writer.writerow([g.subject, g.metric, g.reason, "", "", "", "", "", ""])
    return path


def format_report_table(report: DeviationReport) -> str:
    lines = [
        f"{'subject':<28} {'buckets':>7} {'max|d|':>8} {'mean|d|':>8} {'intervals':>9}  anomalous"
    ]
    for s in report.subjects:
        lines.append(
            f"{s.subject:<28} {s.buckets:>7} {s.max_abs:>8.4f} {s.mean_abs:>8.4f} "
            f"{len(s.intervals):>9}  {'yes' if s.anomalous else 'no'}"
        )
    for g in report.coverage_gaps:
        lines.append(f"{g.subject:<28} {'-':>7} {'-':>8} {'-':>8} {'-':>9}  {g.reason}")
    lines.append(f"overall: {'ANOMALOUS' if report.anomalous else 'ok'}")
    return "\n".join(lines)


def render_report_figures(
    sim: list[TimeSeries],
    observed: list[TimeSeries],
    report: DeviationReport,
    out_dir: str | Path,
) -> list[Path]:
    """Write one PNG per compared subject: both curves plus shaded anomalies."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim_by_key = {(s.subject, s.metric): s for s in sim}
    obs_by_key = {(s.subject, s.metric): s for s in observed}

    written = []
    for subject_dev in report.subjects:
        key = (subject_dev.subject, subject_dev.metric)
        a, b = align(sim_by_key[key], obs_by_key[key], report.params.step_us)
        if not a.values:
            continue
        t0 = a.t0_us
        step_s = a.step_us / 1e6
        xs = [i * step_s for i in range(len(a.values) + 1)]

        fig, ax = plt.subplots(figsize=(8.0, 3.2))
        ax.stairs(a.values, xs, label="simulated (intended)", color="tab:blue", linewidth=1.4)
        ax.stairs(b.values, xs, label="observed", color="tab:orange", linewidth=1.4)
        for iv in subject_dev.intervals:
            ax.axvspan((iv.start_us - t0) / 1e6, (iv.end_us - t0) / 1e6, color="tab:red", alpha=0.18)
        ax.set_xlabel("time since comparison window start [s]")
        ax.set_ylabel("CPU utilization")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(f"{subject_dev.subject}: {subject_dev.metric}")
        ax.legend(loc="upper right", fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"{subject_dev.subject}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)
    return written
