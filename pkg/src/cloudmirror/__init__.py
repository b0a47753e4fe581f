"""cloudmirror: mirror a service cluster into a discrete-event simulation
and flag deviations between intended and observed CPU utilization."""

from .anomaly import (
    DeviationInterval,
    DeviationParams,
    DeviationReport,
    detect_deviations,
    parse_report,
    serialize_report,
)
from .charging import (
    Charger,
    Fault,
    OpCosts,
    Registry,
    Scenario,
    build_cluster_snapshot,
    charger_count,
    chargers_in_range,
    closest_charger,
    generate_registry_csv,
    get_charger,
    haversine_km,
    load_registry,
    load_scenario,
    run_scenario,
    serialize_scenario,
)
from .engine import Cloudlet, Host, SimResult, Vm, run, utilization_series
from .errors import (
    CloudMirrorError,
    ConfigError,
    NotFoundError,
    ParseError,
    ScenarioError,
    ValidationError,
)
from .mirror import MirrorConfig, derive_cloudlets, mirror_run
from .telemetry import (
    Span,
    TelemetryBundle,
    TimeSeries,
    align,
    parse_metrics,
    parse_traces,
    resample,
    serialize_metrics,
    serialize_traces,
)
from .topology import (
    CalibrationConfig,
    ClusterSnapshot,
    NodeSpec,
    PodSpec,
    build_datacenter,
    parse_snapshot,
    serialize_snapshot,
)

__version__ = "0.1.0"
