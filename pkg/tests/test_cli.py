import json
from pathlib import Path

import pytest

import cloudmirror as cm
from cloudmirror.cli import main

BASE_SCENARIO = {
    "vehicles": 6,
    "periodSeconds": 1.0,
    "durationSeconds": 30.0,
    "mix": {"getRandomCharger": 0.5, "getClosebyCharger": 0.5},
    "replicas": 3,
    "baseLoad": 0.05,
    "rngSeed": 42,
}


@pytest.fixture
def workdir(tmp_path, registry_csv):
    (tmp_path / "registry.csv").write_text(registry_csv)
    (tmp_path / "scenario.json").write_text(json.dumps(BASE_SCENARIO))
    return tmp_path


def write_scenario(path: Path, **overrides):
    doc = dict(BASE_SCENARIO)
    doc.update(overrides)
    path.write_text(json.dumps(doc))


def test_generate_writes_three_files(workdir):
    rc = main(["generate", "--scenario", str(workdir / "scenario.json"),
               "--registry", str(workdir / "registry.csv"), "--out", str(workdir / "out")])
    assert rc == 0
    snap = cm.parse_snapshot((workdir / "out" / "snapshot.json").read_text())
    spans = cm.parse_traces((workdir / "out" / "traces.json").read_text())
    metrics = cm.parse_metrics((workdir / "out" / "metrics.json").read_text())
    assert snap.pods and spans and metrics


def test_generate_missing_scenario_is_usage_error(workdir):
    rc = main(["generate", "--scenario", str(workdir / "nope.json"),
               "--registry", str(workdir / "registry.csv"), "--out", str(workdir / "out")])
    assert rc == 2


def test_generate_invalid_scenario_is_usage_error(workdir):
    write_scenario(workdir / "bad.json", mix={"getRandomCharger": 0.9, "getClosebyCharger": 0.9})
    rc = main(["generate", "--scenario", str(workdir / "bad.json"),
               "--registry", str(workdir / "registry.csv"), "--out", str(workdir / "out")])
    assert rc == 2


def test_generate_malformed_registry_is_data_error(workdir):
    bad = workdir / "bad.csv"
    lines = (workdir / "registry.csv").read_text().splitlines()
    lines[3] = lines[3].replace(lines[3].split(";")[7], "not-a-number", 1)
    bad.write_text("\n".join(lines) + "\n")
    rc = main(["generate", "--scenario", str(workdir / "scenario.json"),
               "--registry", str(bad), "--out", str(workdir / "out")])
    assert rc == 3


def test_mirror_roundtrip(workdir):
    out = workdir / "out"
    assert main(["generate", "--scenario", str(workdir / "scenario.json"),
                 "--registry", str(workdir / "registry.csv"), "--out", str(out)]) == 0
    rc = main(["mirror", "--snapshot", str(out / "snapshot.json"),
               "--traces", str(out / "traces.json"), "--out", str(out / "sim.json")])
    assert rc == 0
    assert cm.parse_metrics((out / "sim.json").read_text())


def test_mirror_dangling_pod_reference(workdir):
    snap_doc = {
        "nodes": [{"name": "n1", "cpuCores": 2, "memoryMb": 512, "role": "worker"}],
        "pods": [{"name": "p0", "node": "w9", "service": "svc", "replicaIndex": 0}],
    }
    (workdir / "snap.json").write_text(json.dumps(snap_doc))
    (workdir / "traces.json").write_text(json.dumps({"spans": []}))
    rc = main(["mirror", "--snapshot", str(workdir / "snap.json"),
               "--traces", str(workdir / "traces.json"), "--out", str(workdir / "sim.json")])
    assert rc == 3


def test_mirror_empty_traces_all_zero(workdir):
    snap_doc = {
        "nodes": [{"name": "n1", "cpuCores": 2, "memoryMb": 512, "role": "worker"}],
        "pods": [{"name": "p0", "node": "n1", "service": "svc", "replicaIndex": 0}],
    }
    (workdir / "snap.json").write_text(json.dumps(snap_doc))
    (workdir / "traces.json").write_text(json.dumps({"spans": []}))
    rc = main(["mirror", "--snapshot", str(workdir / "snap.json"),
               "--traces", str(workdir / "traces.json"), "--out", str(workdir / "sim.json")])
    assert rc == 0
    series = cm.parse_metrics((workdir / "sim.json").read_text())
    assert [s.subject for s in series] == ["p0"]
    assert all(v == 0.0 for s in series for v in s.values)


def test_compare_identical_inputs(workdir):
    metrics = cm.serialize_metrics([cm.TimeSeries("a", "cpu_utilization", 0, 1_000_000, [0.4] * 30)])
    (workdir / "m.json").write_text(metrics)
    rc = main(["compare", "--sim", str(workdir / "m.json"), "--observed", str(workdir / "m.json"),
               "--report", str(workdir / "report.json"), "--no-figures"])
    assert rc == 0
    report = cm.parse_report((workdir / "report.json").read_text())
    assert not report.anomalous
    assert all(not s.intervals for s in report.subjects)
    assert (workdir / "report.csv").exists()


def test_compare_subject_disjoint_is_data_error(workdir):
    (workdir / "a.json").write_text(
        cm.serialize_metrics([cm.TimeSeries("a", "cpu_utilization", 0, 1_000_000, [0.4])]))
    (workdir / "b.json").write_text(
        cm.serialize_metrics([cm.TimeSeries("b", "cpu_utilization", 0, 1_000_000, [0.4])]))
    rc = main(["compare", "--sim", str(workdir / "a.json"), "--observed", str(workdir / "b.json"),
               "--report", str(workdir / "report.json"), "--no-figures"])
    assert rc == 3


def test_compare_custom_params(workdir):
    (workdir / "a.json").write_text(
        cm.serialize_metrics([cm.TimeSeries("a", "cpu_utilization", 0, 1_000_000, [0.9] * 30)]))
    (workdir / "b.json").write_text(
        cm.serialize_metrics([cm.TimeSeries("a", "cpu_utilization", 0, 1_000_000, [0.1] * 30)]))
    (workdir / "params.json").write_text(json.dumps(
        {"stepMicros": 1_000_000, "absThreshold": 0.5, "minConsecutive": 5}))
    rc = main(["compare", "--sim", str(workdir / "a.json"), "--observed", str(workdir / "b.json"),
               "--params", str(workdir / "params.json"),
               "--report", str(workdir / "report.json"), "--no-figures"])
    assert rc == 1
    report = cm.parse_report((workdir / "report.json").read_text())
    assert report.params.abs_threshold == 0.5


def test_pipeline_fault_free_exits_zero(workdir):
    rc = main(["pipeline", "--scenario", str(workdir / "scenario.json"),
               "--registry", str(workdir / "registry.csv"),
               "--out", str(workdir / "run"), "--no-figures"])
    assert rc == 0


def test_pipeline_fault_exits_one_with_figures(workdir):
    # sized so the dead replica's deviation clears the default threshold
    write_scenario(workdir / "fault.json", vehicles=12, periodSeconds=1.0,
                   durationSeconds=60.0, faults=[{"replicaIndex": 1, "killAtSeconds": 20.0}])
    out = workdir / "run"
    rc = main(["pipeline", "--scenario", str(workdir / "fault.json"),
               "--registry", str(workdir / "registry.csv"), "--out", str(out)])
    assert rc == 1
    report = cm.parse_report((out / "report.json").read_text())
    flagged = {s.subject for s in report.subjects if s.anomalous}
    assert flagged == {"charging-station-1"}
    figures = sorted(p.name for p in (out / "report_figures").glob("*.png"))
    assert "charging-station-1.png" in figures
    assert (out / "report.csv").read_text().startswith("subject,")


def test_pipeline_invalid_scenario_exits_two(workdir):
    (workdir / "broken.json").write_text("{")
    rc = main(["pipeline", "--scenario", str(workdir / "broken.json"),
               "--registry", str(workdir / "registry.csv"), "--out", str(workdir / "run")])
    assert rc == 2


def test_make_registry(tmp_path):
    rc = main(["make-registry", "--out", str(tmp_path / "reg.csv"), "--rows", "25", "--seed", "3"])
    assert rc == 0
    assert cm.charger_count(cm.load_registry((tmp_path / "reg.csv").read_text())) == 25


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
