"""Command-line pipeline: generate telemetry, mirror it, compare, report.

Exit codes: 0 ok / no anomaly, 1 anomaly detected, 2 usage or
configuration error, 3 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .anomaly import DeviationParams, detect_deviations, serialize_report
from .charging import (
    build_cluster_snapshot,
    generate_registry_csv,
    load_registry,
    load_scenario,
    run_scenario,
)
from .errors import CloudMirrorError, ConfigError, ParseError
from .mirror import MirrorConfig, mirror_run
from .report import format_report_table, render_report_figures, write_report_csv
from .telemetry import TelemetryBundle, parse_metrics, parse_traces, serialize_metrics
from .topology import CalibrationConfig, parse_snapshot, serialize_snapshot

EXIT_OK = 0
EXIT_ANOMALY = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _read_config_file(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path!r}: {exc}") from exc


def _read_data_file(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {what} {path!r}: {exc}") from exc


def _load_mirror_config(path: str | None) -> MirrorConfig:
    if path is None:
        return MirrorConfig()
    try:
        doc = json.loads(_read_config_file(path, "mirror config"))
        calib = doc.get("calibration", {})
        return MirrorConfig(
            calibration=CalibrationConfig(
                mips_per_core=calib.get("mipsPerCore", 1000.0),
                vm_cores_per_pod=calib.get("vmCoresPerPod", 1),
                vm_memory_mb=calib.get("vmMemoryMb", 512),
                busy_fraction=calib.get("busyFraction", 1.0),
            ),
            bucket_us=doc.get("bucketMicros", 1_000_000),
            span_filter=doc.get("spanFilter", "server_spans_only"),
        )
    except (json.JSONDecodeError, TypeError, AttributeError) as exc:
        raise ConfigError(f"mirror config {path!r}: {exc}") from exc


def _load_params(path: str | None) -> DeviationParams:
    if path is None:
        return DeviationParams()
    try:
        doc = json.loads(_read_config_file(path, "deviation params"))
        return DeviationParams(
            step_us=doc.get("stepMicros", 5_000_000),
            abs_threshold=doc.get("absThreshold", 0.15),
            min_consecutive=doc.get("minConsecutive", 3),
        )
    except (json.JSONDecodeError, TypeError, AttributeError) as exc:
        raise ConfigError(f"deviation params {path!r}: {exc}") from exc


def cmd_generate(args) -> int:
    scenario = load_scenario(_read_config_file(args.scenario, "scenario"))
    registry = load_registry(_read_data_file(args.registry, "registry"))
    snapshot = build_cluster_snapshot(scenario)
    bundle = run_scenario(registry, snapshot, scenario)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .telemetry import serialize_traces

    (out / "snapshot.json").write_text(serialize_snapshot(bundle.snapshot))
    (out / "traces.json").write_text(serialize_traces(bundle.spans))
    (out / "metrics.json").write_text(serialize_metrics(bundle.metrics))
    print(
        f"generated {len(bundle.spans)} spans and {len(bundle.metrics)} series "
        f"into {out}"
    )
    return EXIT_OK


def cmd_mirror(args) -> int:
    config = _load_mirror_config(args.config)
    snapshot = parse_snapshot(_read_data_file(args.snapshot, "snapshot"))
    spans = parse_traces(_read_data_file(args.traces, "traces"))
    bundle = TelemetryBundle(spans=spans, metrics=[], snapshot=snapshot)
    series = mirror_run(bundle, config)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_metrics(series))
    print(f"mirrored {len(spans)} spans into {len(series)} simulated series at {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    params = _load_params(args.params)
    sim = parse_metrics(_read_data_file(args.sim, "simulated metrics"))
    observed = parse_metrics(_read_data_file(args.observed, "observed metrics"))
    report = detect_deviations(sim, observed, params)

    report_path = Path(args.report)
    if report_path.parent != Path(""):
        report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(serialize_report(report))
    write_report_csv(report, report_path.with_suffix(".csv"))
    if not args.no_figures:
        fig_dir = report_path.parent / (report_path.stem + "_figures")
        render_report_figures(sim, observed, report, fig_dir)
    print(format_report_table(report))
    return EXIT_ANOMALY if report.anomalous else EXIT_OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    rc = cmd_generate(argparse.Namespace(scenario=args.scenario, registry=args.registry, out=str(out)))
    if rc != EXIT_OK:
        return rc
    rc = cmd_mirror(
        argparse.Namespace(
            snapshot=str(out / "snapshot.json"),
            traces=str(out / "traces.json"),
            config=None,
            out=str(out / "simulated_metrics.json"),
        )
    )
    if rc != EXIT_OK:
        return rc
    return cmd_compare(
        argparse.Namespace(
            sim=str(out / "simulated_metrics.json"),
            observed=str(out / "metrics.json"),
            params=None,
            report=str(out / "report.json"),
            no_figures=args.no_figures,
        )
    )


def cmd_make_registry(args) -> int:
    if args.rows < 0:
        raise ConfigError("--rows must be non-negative")
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(generate_registry_csv(rows=args.rows, seed=args.seed))
    print(f"wrote {args.rows}-row charger registry to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudmirror",
        description="Mirror a service cluster into a simulation and detect deviations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run a charging scenario and write its telemetry")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--registry", required=True, help="charger registry CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("mirror", help="replay traces on the snapshot and emit simulated metrics")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--config", default=None, help="optional mirror config JSON")
    p.add_argument("--out", required=True, help="output metrics document")
    p.set_defaults(func=cmd_mirror)

    p = sub.add_parser("compare", help="deviation analysis between simulated and observed metrics")
    p.add_argument("--sim", required=True)
    p.add_argument("--observed", required=True)
    p.add_argument("--params", default=None, help="optional deviation params JSON")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--no-figures", action="store_true", help="skip PNG comparison figures")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pipeline", help="generate, mirror and compare in one run")
    p.add_argument("--scenario", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("make-registry", help="write a seeded desk-scale charger registry CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_make_registry)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CloudMirrorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
