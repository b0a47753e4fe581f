"""Mirror a cluster into the simulator: snapshot + traces -> simulated series.

Replay is timestamp-driven: each retained span becomes one cloudlet whose
start offset is the span start relative to the earliest retained span
(the simulation epoch) and whose length is the span duration converted to
work at the calibrated rating.  Parent/child causality is not re-enforced
during replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import Cloudlet, run, utilization_series
from .errors import ConfigError, ValidationError
from .telemetry import Span, TelemetryBundle, TimeSeries
from .topology import CalibrationConfig, ClusterSnapshot, build_datacenter

SPAN_FILTERS = ("server_spans_only", "all_spans")


@dataclass(frozen=True)
class MirrorConfig:
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    bucket_us: int = 1_000_000
    span_filter: str = "server_spans_only"

    def __post_init__(self):
        if self.bucket_us <= 0:
            raise ConfigError("bucket_us must be positive")
        if self.span_filter not in SPAN_FILTERS:
            raise ConfigError(f"span_filter must be one of {SPAN_FILTERS}")


def derive_cloudlets(
    spans: list[Span],
    snapshot: ClusterSnapshot,
    calib: CalibrationConfig,
    span_filter: str = "server_spans_only",
) -> tuple[list[Cloudlet], int]:
    """Convert retained spans into cloudlets plus the simulation epoch.

    length_mi = duration seconds x rating x busy_fraction; client spans are
    skipped by default so one request is not counted at caller and callee.
    Returns ([], 0) when nothing is retained.
    """
    pod_names = {p.name for p in snapshot.pods}
    retained = [s for s in spans if span_filter == "all_spans" or s.kind == "server"]
    for span in retained:
        if span.service_instance not in pod_names:
            raise ValidationError(
                f"span {span.span_id!r}: instance {span.service_instance!r} has no pod in snapshot"
            )
    if not retained:
        return [], 0

    retained.sort(key=lambda s: (s.start_us, s.span_id))
    epoch_us = retained[0].start_us
    cloudlets = [
        Cloudlet(
            id=i,
            vm_id=span.service_instance,
            length_mi=span.duration_us / 1e6 * calib.mips_per_core * calib.busy_fraction,
            start_offset_us=span.start_us - epoch_us,
            required_cores=1,
        )
        for i, span in enumerate(retained)
    ]
    return cloudlets, epoch_us


def mirror_run(bundle: TelemetryBundle, config: MirrorConfig | None = None) -> list[TimeSeries]:
    """Run the mirroring pipeline and return one simulated series per pod VM.

    Idle VMs emit all-zero series so anomaly comparison has total subject
    coverage.  Series start at the derived epoch.
    """
    config = config or MirrorConfig()
    hosts, vms, pod_to_vm = build_datacenter(bundle.snapshot, config.calibration)
    cloudlets, epoch_us = derive_cloudlets(
        bundle.spans, bundle.snapshot, config.calibration, config.span_filter
    )
    result = run(hosts, vms, cloudlets)
    return [
        utilization_series(result, pod_to_vm[pod.name], config.bucket_us, t0_us=epoch_us)
        for pod in bundle.snapshot.pods
    ]
