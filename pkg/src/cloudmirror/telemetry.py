"""Trace and metrics data model, file formats, resampling and alignment.

Trace document: {"spans": [{"traceId", "spanId", "parentSpanId"?,
"operation", "serviceInstance", "node", "startMicros", "durationMicros",
"kind"}]}.  Metrics document: {"series": [{"subject", "metric",
"t0Micros", "stepMicros", "values"}]}.

Series use a step-function interpretation: each sample holds from its
bucket start until the next bucket, which matches how utilization
counters are scraped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .topology import ClusterSnapshot

SPAN_KINDS = ("server", "client")


@dataclass(frozen=True)
class Span:
    """One recorded service execution."""

    trace_id: str
    span_id: str
    operation: str
    service_instance: str
    node: str
    start_us: int
    duration_us: int
    kind: str
    parent_span_id: str | None = None


@dataclass
class TimeSeries:
    """Fixed-step samples for one subject; utilization values lie in [0,1]."""

    subject: str
    metric: str
    t0_us: int
    step_us: int
    values: list[float] = field(default_factory=list)

    @property
    def end_us(self) -> int:
        return self.t0_us + len(self.values) * self.step_us


@dataclass
class TelemetryBundle:
    """Everything the mirror consumes: spans, observed metrics, snapshot."""

    spans: list[Span]
    metrics: list[TimeSeries]
    snapshot: ClusterSnapshot

    def __post_init__(self):
        pod_names = {p.name for p in self.snapshot.pods}
        subjects = pod_names | {n.name for n in self.snapshot.nodes}
        for span in self.spans:
            if span.service_instance not in pod_names:
                raise ValidationError(
                    f"span {span.span_id!r}: instance {span.service_instance!r} not in snapshot"
                )
        for series in self.metrics:
            if series.subject not in subjects:
                raise ValidationError(f"metric subject {series.subject!r} not in snapshot")


def _is_utilization(metric: str) -> bool:
    return "utilization" in metric


def parse_traces(text: str) -> list[Span]:
    """Parse a trace document; spans come back sorted by (start, span id)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"trace document: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("spans"), list):
        raise ParseError("trace document: expected object with a 'spans' array")

    spans = []
    for i, rec in enumerate(doc["spans"]):
        where = f"span[{i}]"
        try:
            trace_id = rec["traceId"]
            span_id = rec["spanId"]
            operation = rec["operation"]
            instance = rec["serviceInstance"]
            node = rec["node"]
            start = rec["startMicros"]
            duration = rec["durationMicros"]
            kind = rec["kind"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{where}: missing field {exc}") from exc
        if not isinstance(start, int) or start < 0:
            raise ValidationError(f"{where}: startMicros must be a non-negative integer")
        if not isinstance(duration, int) or duration <= 0:
            raise ValidationError(f"{where}: durationMicros must be a positive integer")
        if kind not in SPAN_KINDS:
            raise ValidationError(f"{where}: kind must be one of {SPAN_KINDS}")
        spans.append(
            Span(
                trace_id=trace_id,
                span_id=span_id,
                operation=operation,
                service_instance=instance,
                node=node,
                start_us=start,
                duration_us=duration,
                kind=kind,
                parent_span_id=rec.get("parentSpanId"),
            )
        )
    seen = {}
    for span in spans:
        key = (span.trace_id, span.span_id)
        if key in seen:
            raise ValidationError(f"duplicate span id {span.span_id!r} in trace {span.trace_id!r}")
        seen[key] = span
    spans.sort(key=lambda s: (s.start_us, s.span_id))
    return spans


def serialize_traces(spans: list[Span]) -> str:
    doc = {
        "spans": [
            {
                "traceId": s.trace_id,
                "spanId": s.span_id,
                **({"parentSpanId": s.parent_span_id} if s.parent_span_id is not None else {}),
                "operation": s.operation,
                "serviceInstance": s.service_instance,
                "node": s.node,
                "startMicros": s.start_us,
                "durationMicros": s.duration_us,
                "kind": s.kind,
            }
            for s in sorted(spans, key=lambda s: (s.start_us, s.span_id))
        ]
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_metrics(text: str) -> list[TimeSeries]:
    """Parse a metrics document; utilization values are range-checked."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"metrics document: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("series"), list):
        raise ParseError("metrics document: expected object with a 'series' array")

    out = []
    for i, rec in enumerate(doc["series"]):
        where = f"series[{i}]"
        try:
            subject = rec["subject"]
            metric = rec["metric"]
            t0 = rec["t0Micros"]
            step = rec["stepMicros"]
            values = rec["values"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{where}: missing field {exc}") from exc
        if not isinstance(step, int) or step <= 0:
            raise ValidationError(f"{where}: stepMicros must be a positive integer")
        if not isinstance(t0, int) or t0 < 0:
            raise ValidationError(f"{where}: t0Micros must be a non-negative integer")
        if not isinstance(values, list):
            raise ParseError(f"{where}: values must be an array")
        floats = []
        for j, v in enumerate(values):
            if not isinstance(v, (int, float)):
                raise ValidationError(f"{where}: values[{j}] is not a number")
            v = float(v)
            if _is_utilization(metric) and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{where}: utilization value {v} outside [0, 1]")
            floats.append(v)
        out.append(TimeSeries(subject=subject, metric=metric, t0_us=t0, step_us=step, values=floats))
    return out


def serialize_metrics(series: list[TimeSeries]) -> str:
    doc = {
        "series": [
            {
                "subject": s.subject,
                "metric": s.metric,
                "t0Micros": s.t0_us,
                "stepMicros": s.step_us,
                "values": s.values,
            }
            for s in series
        ]
    }
    return json.dumps(doc, indent=2) + "\n"


def _rebucket(series: TimeSeries, new_t0: int, new_step: int, n_out: int) -> list[float]:
    """Time-weighted means of the step function over a new bucket grid.

    Buckets (or bucket tails) outside the input coverage contribute
    nothing and shrink the divisor, so the time integral is conserved.
    """
    end = series.end_us
    out = []
    for k in range(n_out):
        b0 = new_t0 + k * new_step
        b1 = b0 + new_step
        lo = max(b0, series.t0_us)
        hi = min(b1, end)
        if hi <= lo:
            out.append(0.0)
            continue
        acc = 0.0
        i = (lo - series.t0_us) // series.step_us
        t = lo
        while t < hi:
            seg_end = min(hi, series.t0_us + (i + 1) * series.step_us)
            acc += series.values[i] * (seg_end - t)
            t = seg_end
            i += 1
        out.append(acc / (hi - lo))
    return out


def resample(series: TimeSeries, new_step_us: int) -> TimeSeries:
    """Resample to an arbitrary step; partial trailing buckets keep their
    covered-time mean."""
    if new_step_us <= 0:
        raise ValueError("new_step_us must be positive")
    if not series.values:
        return TimeSeries(series.subject, series.metric, series.t0_us, new_step_us, [])
    if new_step_us == series.step_us:
        return TimeSeries(series.subject, series.metric, series.t0_us, series.step_us, list(series.values))
    span = len(series.values) * series.step_us
    n_out = -(-span // new_step_us)
    values = _rebucket(series, series.t0_us, new_step_us, n_out)
    return TimeSeries(series.subject, series.metric, series.t0_us, new_step_us, values)


def align(a: TimeSeries, b: TimeSeries, step_us: int) -> tuple[TimeSeries, TimeSeries]:
    """Resample both series onto a shared grid over their overlap window.

    Only whole buckets inside [max(t0), min(end)) are kept, so the two
    outputs always have equal length.
    """
    if step_us <= 0:
        raise ValueError("step_us must be positive")
    win0 = max(a.t0_us, b.t0_us)
    win1 = min(a.end_us, b.end_us)
    if win1 <= win0:
        raise ValidationError(
            f"series {a.subject!r} and {b.subject!r} have no overlapping coverage"
        )
    n = (win1 - win0) // step_us
    va = _rebucket(a, win0, step_us, n)
    vb = _rebucket(b, win0, step_us, n)
    return (
        TimeSeries(a.subject, a.metric, win0, step_us, va),
        TimeSeries(b.subject, b.metric, win0, step_us, vb),
    )
