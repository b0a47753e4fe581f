"""Deviation analysis between simulated (intended) and observed series.

An anomaly is a sustained absolute deviation: at least min_consecutive
aligned buckets in a row with |sim - observed| above abs_threshold.  The
signed convention is sim - observed, so a crashed real service shows a
positive deviation.  Absolute thresholds are used because relative ones
misfire near zero utilization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigError, ParseError, ValidationError
from .telemetry import TimeSeries, align


@dataclass(frozen=True)
class DeviationParams:
    step_us: int = 5_000_000
    abs_threshold: float = 0.15
    min_consecutive: int = 3

    def __post_init__(self):
        if self.step_us <= 0:
            raise ConfigError("step_us must be positive")
        if not 0.0 < self.abs_threshold <= 1.0:
            raise ConfigError("abs_threshold must be in (0, 1]")
        if self.min_consecutive < 1:
            raise ConfigError("min_consecutive must be >= 1")


@dataclass(frozen=True)
class DeviationInterval:
    start_us: int
    end_us: int
    mean_signed: float  # mean of sim - observed over the interval


@dataclass
class SubjectDeviation:
    subject: str
    metric: str
    buckets: int
    max_abs: float
    mean_abs: float
    intervals: list[DeviationInterval]
    anomalous: bool


@dataclass
class CoverageGap:
    subject: str
    metric: str
    reason: str  # missing_in_sim | missing_in_observed | disjoint_coverage


@dataclass
class DeviationReport:
    params: DeviationParams
    subjects: list[SubjectDeviation]
    coverage_gaps: list[CoverageGap]
    anomalous: bool


def _find_intervals(deviations, t0_us, params):
    intervals = []
    run_start = None
    for i, d in enumerate(deviations + [0.0]):  # sentinel closes a trailing run
        over = abs(d) > params.abs_threshold and i < len(deviations)
        if over and run_start is None:
            run_start = i
        elif not over and run_start is not None:
            length = i - run_start
            if length >= params.min_consecutive:
                chunk = deviations[run_start:i]
                intervals.append(
                    DeviationInterval(
                        start_us=t0_us + run_start * params.step_us,
                        end_us=t0_us + i * params.step_us,
                        mean_signed=sum(chunk) / length,
                    )
                )
            run_start = None
    return intervals


def detect_deviations(
    sim: list[TimeSeries],
    observed: list[TimeSeries],
    params: DeviationParams | None = None,
) -> DeviationReport:
    """Compare matched subjects and report sustained deviations.

    Subjects are matched by (subject, metric).  Subjects present on only
    one side, or matched pairs without usable overlap, become coverage
    gaps rather than anomalies.
    """
    params = params or DeviationParams()
    sim_by_key = {(s.subject, s.metric): s for s in sim}
    obs_by_key = {(s.subject, s.metric): s for s in observed}
    matched = sorted(sim_by_key.keys() & obs_by_key.keys())
    if not matched:
        raise ValidationError("no matching subjects between simulated and observed series")

    subjects = []
    gaps = []
    for key in sorted(sim_by_key.keys() | obs_by_key.keys()):
        subject, metric = key
        if key not in obs_by_key:
            gaps.append(CoverageGap(subject, metric, "missing_in_observed"))
            continue
        if key not in sim_by_key:
            gaps.append(CoverageGap(subject, metric, "missing_in_sim"))
            continue
        try:
            a, b = align(sim_by_key[key], obs_by_key[key], params.step_us)
        except ValidationError:
            gaps.append(CoverageGap(subject, metric, "disjoint_coverage"))
            continue
        if not a.values:
            gaps.append(CoverageGap(subject, metric, "disjoint_coverage"))
            continue
        deviations = [x - y for x, y in zip(a.values, b.values)]
        intervals = _find_intervals(deviations, a.t0_us, params)
        abs_dev = [abs(d) for d in deviations]
        subjects.append(
            SubjectDeviation(
                subject=subject,
                metric=metric,
                buckets=len(deviations),
                max_abs=max(abs_dev),
                mean_abs=sum(abs_dev) / len(abs_dev),
                intervals=intervals,
                anomalous=bool(intervals),
            )
        )
    return DeviationReport(
        params=params,
        subjects=subjects,
        coverage_gaps=gaps,
        anomalous=any(s.anomalous for s in subjects),
    )


def serialize_report(report: DeviationReport) -> str:
    doc = {
        "params": {
            "stepMicros": report.params.step_us,
            "absThreshold": report.params.abs_threshold,
            "minConsecutive": report.params.min_consecutive,
        },
        "anomalous": report.anomalous,
        "subjects": [
            {
                "subject": s.subject,
                "metric": s.metric,
                "buckets": s.buckets,
                "maxAbsDeviation": s.max_abs,
                "meanAbsDeviation": s.mean_abs,
                "anomalous": s.anomalous,
                "intervals": [
                    {
                        "startMicros": iv.start_us,
                        "endMicros": iv.end_us,
                        "meanSignedDeviation": iv.mean_signed,
                    }
                    for iv in s.intervals
                ],
            }
            for s in report.subjects
        ],
        "coverageGaps": [
            {"subject": g.subject, "metric": g.metric, "reason": g.reason}
            for g in report.coverage_gaps
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_report(text: str) -> DeviationReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"report document: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        params = DeviationParams(
            step_us=doc["params"]["stepMicros"],
            abs_threshold=doc["params"]["absThreshold"],
            min_consecutive=doc["params"]["minConsecutive"],
        )
        subjects = [
            SubjectDeviation(
                subject=rec["subject"],
                metric=rec["metric"],
                buckets=rec["buckets"],
                max_abs=rec["maxAbsDeviation"],
                mean_abs=rec["meanAbsDeviation"],
                intervals=[
                    DeviationInterval(iv["startMicros"], iv["endMicros"], iv["meanSignedDeviation"])
                    for iv in rec["intervals"]
                ],
                anomalous=rec["anomalous"],
            )
            for rec in doc["subjects"]
        ]
        gaps = [
            CoverageGap(rec["subject"], rec["metric"], rec["reason"])
            for rec in doc["coverageGaps"]
        ]
        return DeviationReport(params, subjects, gaps, doc["anomalous"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"report document: missing field {exc}") from exc
