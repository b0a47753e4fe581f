import csv
import io
import math
import random

import pytest

import cloudmirror as cm

HEADER = "operator;street;house_number;zip;city;state;district;latitude;longitude;points;plug_types;power_kw"


def oracle_haversine(lat1, lon1, lat2, lon2):
    """Independent formulation (atan2 form) for cross-checking distances."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 6371.0088 * 2 * math.atan2(math.sqrt(a), math.sqrt(1 - a))


def tiny_registry(rows):
    return cm.load_registry(HEADER + "\n" + "\n".join(rows) + ("\n" if rows else ""))


# --- registry loading ---------------------------------------------------

def test_load_fixture(registry):
    assert cm.charger_count(registry) == 500
    assert [c.id for c in registry.chargers] == list(range(500))


def test_load_header_only():
    assert cm.charger_count(cm.load_registry(HEADER + "\n")) == 0


def test_load_bad_latitude_cites_row():
    rows = [
        "Op;Weg;1;70173;Stadt;Land;Kreis;48.5;9.1;1;Type2;22",
        "Op;Weg;2;70174;Stadt;Land;Kreis;abc;9.2;1;CCS;50",
    ]
    with pytest.raises(cm.ParseError, match="row 2"):
        tiny_registry(rows)


def test_load_bad_power_and_list_length():
    with pytest.raises(cm.ParseError, match="row 1"):
        tiny_registry(["Op;Weg;1;70173;Stadt;Land;Kreis;48.5;9.1;2;Type2;22"])
    with pytest.raises(cm.ParseError, match="power"):
        tiny_registry(["Op;Weg;1;70173;Stadt;Land;Kreis;48.5;9.1;1;Type2;zero"])
    with pytest.raises(cm.ParseError, match="header"):
        cm.load_registry("operator;street\nOp;Weg\n")


def test_row_41_fields_verbatim(registry_csv, registry):
    rows = list(csv.reader(io.StringIO(registry_csv), delimiter=";"))
    raw = rows[42]  # header + 42 data rows; charger ids start at 0
    charger = cm.get_charger(registry, 41)
    assert charger.operator == raw[0]
    assert charger.address == (raw[1], raw[2], raw[3], raw[4], raw[5], raw[6])
    assert charger.latitude == float(raw[7])
    assert charger.longitude == float(raw[8])
    assert len(charger.charge_points) == int(raw[9])
    assert [p.plug_type for p in charger.charge_points] == raw[10].split(",")
    assert [p.power_kw for p in charger.charge_points] == [float(x) for x in raw[11].split(",")]


def test_get_charger_bounds(registry):
    assert cm.get_charger(registry, 0) == registry.chargers[0]
    with pytest.raises(cm.NotFoundError):
        cm.get_charger(registry, cm.charger_count(registry))
    with pytest.raises(cm.NotFoundError):
        cm.get_charger(registry, -1)


def test_generator_is_seeded(registry_csv):
    assert cm.generate_registry_csv(rows=500, seed=42) == registry_csv
    assert cm.generate_registry_csv(rows=500, seed=43) != registry_csv


# --- geometry -----------------------------------------------------------

def test_haversine_identical_points():
    assert cm.haversine_km(48.7758, 9.1829, 48.7758, 9.1829) == 0.0


def test_haversine_antipodal_equator():
    # half a great circle: pi x 6371.0088 km
    assert cm.haversine_km(0.0, 0.0, 0.0, 180.0) == pytest.approx(20015.114442035923, rel=1e-12)


def test_haversine_city_pair_oracle():
    got = cm.haversine_km(48.7758, 9.1829, 48.1374, 11.5755)
    assert got == pytest.approx(190.17196953408146, rel=1e-6)
    assert got == pytest.approx(oracle_haversine(48.7758, 9.1829, 48.1374, 11.5755), rel=1e-6)


def test_haversine_symmetry_seeded():
    rng = random.Random(47)
    for _ in range(100):
        lat1, lon1 = rng.uniform(-90, 90), rng.uniform(-180, 180)
        lat2, lon2 = rng.uniform(-90, 90), rng.uniform(-180, 180)
        d = cm.haversine_km(lat1, lon1, lat2, lon2)
        assert d >= 0.0
        assert d == cm.haversine_km(lat2, lon2, lat1, lon1)


def test_haversine_domain():
    with pytest.raises(ValueError):
        cm.haversine_km(91.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        cm.haversine_km(0.0, 181.0, 0.0, 0.0)


def test_closest_at_exact_coordinates(registry):
    target = registry.chargers[7]
    charger, dist = cm.closest_charger(registry, target.latitude, target.longitude)
    assert dist == 0.0
    co_located = [c.id for c in registry.chargers
                  if (c.latitude, c.longitude) == (target.latitude, target.longitude)]
    assert charger.id == min(co_located)


def test_closest_matches_bruteforce(registry):
    rng = random.Random(53)
    for _ in range(100):
        lat, lon = rng.uniform(46.5, 55.5), rng.uniform(5.0, 16.0)
        charger, dist = cm.closest_charger(registry, lat, lon)
        best = min(
            registry.chargers,
            key=lambda c: (oracle_haversine(lat, lon, c.latitude, c.longitude), c.id),
        )
        assert charger.id == best.id
        assert dist == pytest.approx(oracle_haversine(lat, lon, best.latitude, best.longitude), rel=1e-9)


def test_closest_tie_prefers_lower_id():
    rows = [
        "Op;Weg;1;1;A;B;C;1.0;0.0;1;Type2;22",   # id 0, 1 deg north
        "Op;Weg;2;2;A;B;C;-1.0;0.0;1;Type2;22",  # id 1, 1 deg south: same distance
    ]
    reg = tiny_registry(rows)
    charger, _ = cm.closest_charger(reg, 0.0, 0.0)
    assert charger.id == 0


def test_closest_empty_registry():
    with pytest.raises(cm.NotFoundError):
        cm.closest_charger(tiny_registry([]), 0.0, 0.0)


def test_in_range_radius_zero_and_all(registry):
    target = registry.chargers[3]
    hits = cm.chargers_in_range(registry, target.latitude, target.longitude, 0.0)
    assert all(d == 0.0 for _, d in hits)
    assert target.id in [c.id for c, _ in hits]
    everything = cm.chargers_in_range(registry, 51.0, 10.0, 25_000.0)
    assert len(everything) == cm.charger_count(registry)


def test_in_range_matches_bruteforce(registry):
    rng = random.Random(59)
    for _ in range(50):
        lat, lon = rng.uniform(46.5, 55.5), rng.uniform(5.0, 16.0)
        radius = rng.uniform(5.0, 250.0)
        got = [(c.id, d) for c, d in cm.chargers_in_range(registry, lat, lon, radius)]
        oracle = sorted(
            (
                (c.id, oracle_haversine(lat, lon, c.latitude, c.longitude))
                for c in registry.chargers
                if oracle_haversine(lat, lon, c.latitude, c.longitude) <= radius
            ),
            key=lambda t: (t[1], t[0]),
        )
        assert [i for i, _ in got] == [i for i, _ in oracle]
        for (_, d1), (_, d2) in zip(got, oracle):
            assert d1 == pytest.approx(d2, rel=1e-9)


def test_in_range_negative_radius(registry):
    with pytest.raises(ValueError):
        cm.chargers_in_range(registry, 48.0, 9.0, -1.0)


# --- scenarios ----------------------------------------------------------

def test_scenario_roundtrip():
    scenario = cm.Scenario(
        vehicles=5, period_s=1.5, duration_s=30.0, rng_seed=9,
        faults=(cm.Fault(0, 10.0),), base_load=0.04,
    )
    assert cm.load_scenario(cm.serialize_scenario(scenario)) == scenario


def test_scenario_validation():
    with pytest.raises(cm.ScenarioError):
        cm.Scenario(vehicles=0, period_s=1.0, duration_s=10.0)
    with pytest.raises(cm.ScenarioError):
        cm.Scenario(vehicles=1, period_s=1.0, duration_s=10.0, mix_random=0.8, mix_closeby=0.8)
    with pytest.raises(cm.ScenarioError):
        cm.Scenario(vehicles=1, period_s=1.0, duration_s=10.0, faults=(cm.Fault(5, 1.0),))
    with pytest.raises(cm.ScenarioError):
        cm.Scenario(vehicles=1, period_s=1.0, duration_s=10.0, faults=(cm.Fault(0, 10.0),))
    with pytest.raises(cm.ScenarioError):
        cm.load_scenario("{nope")
    with pytest.raises(cm.ScenarioError):
        cm.load_scenario("{}")


def test_build_cluster_snapshot_layout():
    scenario = cm.Scenario(vehicles=1, period_s=1.0, duration_s=10.0, replicas=3)
    snap = cm.build_cluster_snapshot(scenario)
    assert len(snap.nodes) == 4
    roles = {n.name: n.role for n in snap.nodes}
    assert roles["admin"] == "admin"
    charging = [p for p in snap.pods if p.service == "charging-station"]
    assert len(charging) == 3
    assert len({p.node for p in charging}) == 3  # one replica per worker
    vehicle = [p for p in snap.pods if p.service == "vehicle-fleet"]
    assert [p.node for p in vehicle] == ["admin"]


def test_round_robin_exactness(registry):
    # 3 vehicles x 3 closeby ticks each = 9 equal-cost calls over 3 replicas
    scenario = cm.Scenario(
        vehicles=3, period_s=1.0, duration_s=3.0,
        mix_random=0.0, mix_closeby=1.0, rng_seed=4,
    )
    snap = cm.build_cluster_snapshot(scenario)
    bundle = cm.run_scenario(registry, snap, scenario)
    servers = [s for s in bundle.spans if s.kind == "server"]
    assert len(servers) == 9
    counts = {}
    for s in servers:
        counts[s.service_instance] = counts.get(s.service_instance, 0) + 1
    assert set(counts.values()) == {3}


def test_round_robin_prefix_balance(registry):
    scenario = cm.Scenario(vehicles=7, period_s=0.9, duration_s=20.0, rng_seed=21)
    snap = cm.build_cluster_snapshot(scenario)
    bundle = cm.run_scenario(registry, snap, scenario)
    servers = sorted(
        (s for s in bundle.spans if s.kind == "server"),
        key=lambda s: (s.start_us, s.span_id),
    )
    counts = {f"charging-station-{i}": 0 for i in range(3)}
    for s in servers:
        counts[s.service_instance] += 1
        assert max(counts.values()) - min(counts.values()) <= 1


def test_scenario_determinism(registry):
    scenario = cm.Scenario(vehicles=6, period_s=1.3, duration_s=25.0, rng_seed=77,
                           faults=(cm.Fault(2, 11.0),))
    snap = cm.build_cluster_snapshot(scenario)
    b1 = cm.run_scenario(registry, snap, scenario)
    b2 = cm.run_scenario(registry, snap, scenario)
    assert cm.serialize_traces(b1.spans) == cm.serialize_traces(b2.spans)
    assert cm.serialize_metrics(b1.metrics) == cm.serialize_metrics(b2.metrics)


def test_fault_kills_execution_but_not_intent(registry):
    scenario = cm.Scenario(
        vehicles=12, period_s=2.0, duration_s=60.0, rng_seed=5, base_load=0.05,
        faults=(cm.Fault(1, 20.0),),
    )
    snap = cm.build_cluster_snapshot(scenario)
    bundle = cm.run_scenario(registry, snap, scenario)
    kill_wall = snap.captured_at_us + 20_000_000

    # intended dispatch still covers the killed replica after the kill
    late_intended = [
        s for s in bundle.spans
        if s.kind == "server" and s.service_instance == "charging-station-1"
        and s.start_us >= kill_wall
    ]
    assert late_intended

    # but no work executes there: observed utilization decays to base load
    observed = {s.subject: s for s in bundle.metrics}.get("charging-station-1")
    for k, v in enumerate(observed.values):
        bucket_start = observed.t0_us + k * observed.step_us
        if bucket_start >= kill_wall:
            assert v == pytest.approx(scenario.base_load)

    # survivors keep serving their own share: utilization stays above base
    for name in ("charging-station-0", "charging-station-2"):
        s = {m.subject: m for m in bundle.metrics}[name]
        mid = [v for k, v in enumerate(s.values)
               if kill_wall <= s.t0_us + k * s.step_us < kill_wall + 30_000_000]
        assert sum(mid) / len(mid) > scenario.base_load + 0.05


def test_ground_truth_consistency(registry):
    # fault free, no base load: observed equals the mirror of its own bundle
    scenario = cm.Scenario(vehicles=9, period_s=1.7, duration_s=40.0, rng_seed=15, base_load=0.0)
    snap = cm.build_cluster_snapshot(scenario)
    bundle = cm.run_scenario(registry, snap, scenario)
    mirrored = cm.mirror_run(bundle)
    assert cm.serialize_metrics(mirrored) == cm.serialize_metrics(bundle.metrics)


def test_scenario_error_paths(registry):
    empty = cm.load_registry(HEADER + "\n")
    scenario = cm.Scenario(vehicles=1, period_s=1.0, duration_s=5.0)
    snap = cm.build_cluster_snapshot(scenario)
    with pytest.raises(cm.ScenarioError, match="empty registry"):
        cm.run_scenario(empty, snap, scenario)

    all_killed = cm.Scenario(
        vehicles=2, period_s=1.0, duration_s=30.0, replicas=3, rng_seed=1,
        faults=(cm.Fault(0, 5.0), cm.Fault(1, 5.0), cm.Fault(2, 5.0)),
    )
    snap3 = cm.build_cluster_snapshot(all_killed)
    with pytest.raises(cm.ScenarioError, match="all replicas killed"):
        cm.run_scenario(registry, snap3, all_killed)

    mismatched = cm.Scenario(vehicles=1, period_s=1.0, duration_s=5.0, replicas=2)
    with pytest.raises(cm.ScenarioError, match="expects 2"):
        cm.run_scenario(registry, snap, mismatched)


def test_noise_widens_gap_but_stays_bounded(registry):
    scenario = cm.Scenario(vehicles=6, period_s=2.0, duration_s=30.0, rng_seed=3,
                           base_load=0.05, noise=0.02)
    snap = cm.build_cluster_snapshot(scenario)
    bundle = cm.run_scenario(registry, snap, scenario)
    quiet = cm.run_scenario(registry, snap, cm.Scenario(
        vehicles=6, period_s=2.0, duration_s=30.0, rng_seed=3, base_load=0.05))
    assert cm.serialize_metrics(bundle.metrics) != cm.serialize_metrics(quiet.metrics)
    for noisy, base in zip(bundle.metrics, quiet.metrics):
        assert all(0.0 <= v <= 1.0 for v in noisy.values)
        assert all(abs(a - b) <= 0.02 + 1e-12 for a, b in zip(noisy.values, base.values))
