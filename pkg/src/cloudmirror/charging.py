"""Electric-vehicle charging workload: registry, queries, and scenario replay.

The charging-station registry is a semicolon-separated CSV (header:
``operator;street;house_number;zip;city;state;district;latitude;longitude;
points;plug_types;power_kw``); a charger's id is its row position.  A
seeded generator emits desk-scale fixtures in the same schema.

run_scenario() replays a fleet of periodic vehicle clients against the
replicated charging service and produces a full telemetry bundle: the
trace holds the intended round-robin dispatch, while the observed metrics
come from the same simulation engine run on the true configuration with
faults applied and background node load added.  Requests routed to a
replica that has been killed fail and execute nowhere; calls already in
flight at the kill instant are redistributed to surviving replicas, so no
work ever executes on a replica after its kill time.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .engine import run, utilization_series
from .errors import NotFoundError, ParseError, ScenarioError
from .mirror import derive_cloudlets
from .telemetry import Span, TelemetryBundle, TimeSeries
from .topology import CalibrationConfig, ClusterSnapshot, NodeSpec, PodSpec, build_datacenter

EARTH_RADIUS_KM = 6371.0088
REGISTRY_HEADER = [
    "operator", "street", "house_number", "zip", "city", "state", "district",
    "latitude", "longitude", "points", "plug_types", "power_kw",
]
DEFAULT_EPOCH_US = 1_700_000_000_000_000
VEHICLE_SERVICE = "vehicle-fleet"

OP_COUNT = "charger-count"
OP_GET = "charger-by-id"
OP_CLOSEBY = "closeby-charger"


class Address(NamedTuple):
    street: str
    house_number: str
    zip: str
    city: str
    state: str
    district: str


class ChargePoint(NamedTuple):
    plug_type: str
    power_kw: float


@dataclass(frozen=True)
class Charger:
    id: int
    operator: str
    address: Address
    latitude: float
    longitude: float
    charge_points: tuple[ChargePoint, ...]


@dataclass(frozen=True)
class Registry:
    chargers: tuple[Charger, ...]

    def __post_init__(self):
        for pos, charger in enumerate(self.chargers):
            if charger.id != pos:
                raise ParseError(f"charger id {charger.id} does not match position {pos}")


def load_registry(text: str) -> Registry:
    """Parse a charger CSV; any bad row fails the whole load so ids stay stable."""
    reader = csv.reader(io.StringIO(text), delimiter=";")
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("registry CSV is empty (missing header)") from None
    if header != REGISTRY_HEADER:
        raise ParseError(f"registry CSV header mismatch: {header!r}")

    chargers = []
    for row_num, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(REGISTRY_HEADER):
            raise ParseError(f"row {row_num}: expected {len(REGISTRY_HEADER)} fields, got {len(row)}")
        (operator, street, house, zip_code, city, state, district,
         lat_s, lon_s, points_s, plugs_s, powers_s) = row
        try:
            lat = float(lat_s)
            lon = float(lon_s)
        except ValueError:
            raise ParseError(f"row {row_num}: unparseable coordinate {lat_s!r}/{lon_s!r}") from None
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ParseError(f"row {row_num}: coordinate ({lat}, {lon}) out of range")
        try:
            points = int(points_s)
        except ValueError:
            raise ParseError(f"row {row_num}: unparseable point count {points_s!r}") from None
        if points < 1:
            raise ParseError(f"row {row_num}: a charger needs at least one charge point")
        plugs = plugs_s.split(",")
        power_fields = powers_s.split(",")
        if len(plugs) != points or len(power_fields) != points:
            raise ParseError(f"row {row_num}: plug_types/power_kw lists must have length {points}")
        try:
            powers = [float(p) for p in power_fields]
        except ValueError:
            raise ParseError(f"row {row_num}: unparseable power in {powers_s!r}") from None
        if any(p <= 0 for p in powers):
            raise ParseError(f"row {row_num}: power_kw values must be positive")
        chargers.append(
            Charger(
                id=len(chargers),
                operator=operator,
                address=Address(street, house, zip_code, city, state, district),
                latitude=lat,
                longitude=lon,
                charge_points=tuple(ChargePoint(pl, pw) for pl, pw in zip(plugs, powers)),
            )
        )
    return Registry(chargers=tuple(chargers))


def charger_count(registry: Registry) -> int:
    return len(registry.chargers)


def get_charger(registry: Registry, charger_id: int) -> Charger:
    if not 0 <= charger_id < len(registry.chargers):
        raise NotFoundError(f"no charger with id {charger_id}")
    return registry.chargers[charger_id]


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere of radius 6371.0088 km."""
    for lat in (lat1, lat2):
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} out of range")
    for lon in (lon1, lon2):
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} out of range")
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    half_dp = math.radians(lat2 - lat1) / 2.0
    half_dl = math.radians(lon2 - lon1) / 2.0
    a = math.sin(half_dp) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(half_dl) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def closest_charger(registry: Registry, lat: float, lon: float) -> tuple[Charger, float]:
    """Nearest charger by great-circle distance; ties go to the lowest id."""
    if not registry.chargers:
        raise NotFoundError("registry is empty")
    best = None
    best_dist = math.inf
    for charger in registry.chargers:
        d = haversine_km(lat, lon, charger.latitude, charger.longitude)
        if d < best_dist:
            best = charger
            best_dist = d
    return best, best_dist


def chargers_in_range(
    registry: Registry, lat: float, lon: float, radius_km: float
) -> list[tuple[Charger, float]]:
    """All chargers within radius_km, sorted by (distance, id)."""
    if radius_km < 0:
        raise ValueError("radius_km must be non-negative")
    hits = []
    for charger in registry.chargers:
        d = haversine_km(lat, lon, charger.latitude, charger.longitude)
        if d <= radius_km:
            hits.append((charger, d))
    hits.sort(key=lambda cd: (cd[1], cd[0].id))
    return hits


# --- fixture generation -------------------------------------------------

_CITIES = [
    ("Stuttgart", "Baden-Württemberg", 48.7758, 9.1829),
    ("München", "Bayern", 48.1374, 11.5755),
    ("Berlin", "Berlin", 52.5200, 13.4050),
    ("Hamburg", "Hamburg", 53.5511, 9.9937),
    ("Köln", "Nordrhein-Westfalen", 50.9375, 6.9603),
    ("Frankfurt am Main", "Hessen", 50.1109, 8.6821),
    ("Dresden", "Sachsen", 51.0504, 13.7373),
    ("Hannover", "Niedersachsen", 52.3759, 9.7320),
    ("Nürnberg", "Bayern", 49.4521, 11.0767),
    ("Leipzig", "Sachsen", 51.3397, 12.3731),
    ("Freiburg", "Baden-Württemberg", 47.9990, 7.8421),
    ("Kiel", "Schleswig-Holstein", 54.3233, 10.1228),
]
_OPERATORS = [
    "EnergieSued GmbH", "VoltGrid AG", "ChargePark SE",
    "Stadtwerke Neckar", "NordStrom eMobility", "LadeNetz Verbund",
]
_STREETS = [
    "Hauptstrasse", "Bahnhofstrasse", "Gartenweg", "Industriering",
    "Marktplatz", "Schillerstrasse", "Lindenallee", "Am Stadtpark",
]
_PLUGS = ["Type2", "CCS", "CHAdeMO", "Schuko"]
_POWERS_KW = [3.7, 11.0, 22.0, 50.0, 150.0, 300.0]


def generate_registry_csv(rows: int = 500, seed: int = 1) -> str:
    """Emit a seeded desk-scale charger CSV in the registry schema."""
    rng = random.Random(f"{seed}:registry")
    lines = [";".join(REGISTRY_HEADER)]
    for _ in range(rows):
        city, state, clat, clon = rng.choice(_CITIES)
        lat = clat + rng.uniform(-0.35, 0.35)
        lon = clon + rng.uniform(-0.45, 0.45)
        points = rng.randint(1, 4)
        plugs = [rng.choice(_PLUGS) for _ in range(points)]
        powers = [rng.choice(_POWERS_KW) for _ in range(points)]
        lines.append(
            ";".join(
                [
                    rng.choice(_OPERATORS),
                    rng.choice(_STREETS),
                    str(rng.randint(1, 120)),
                    str(rng.randint(10000, 99999)),
                    city,
                    state,
                    f"Kreis {city}",
                    f"{lat:.6f}",
                    f"{lon:.6f}",
                    str(points),
                    ",".join(plugs),
                    ",".join(f"{p:g}" for p in powers),
                ]
            )
        )
    return "\n".join(lines) + "\n"


# --- scenarios -----------------------------------------------------------

@dataclass(frozen=True)
class Fault:
    replica_index: int
    kill_at_s: float


@dataclass(frozen=True)
class OpCosts:
    """Work per API operation in MI; closeby scales with registry size."""

    count_mi: float = 10.0
    get_mi: float = 20.0
    closeby_mi_per_row: float = 0.5


@dataclass(frozen=True)
class Scenario:
    vehicles: int
    period_s: float
    duration_s: float
    mix_random: float = 0.5
    mix_closeby: float = 0.5
    replicas: int = 3
    op_costs: OpCosts = field(default_factory=OpCosts)
    base_load: float = 0.05
    faults: tuple[Fault, ...] = ()
    rng_seed: int = 0
    noise: float = 0.0
    service: str = "charging-station"
    metrics_step_s: float = 1.0

    def __post_init__(self):
        if self.vehicles < 1:
            raise ScenarioError("vehicles must be >= 1")
        if self.period_s <= 0 or self.duration_s <= 0:
            raise ScenarioError("period_s and duration_s must be positive")
        if not (0.0 <= self.mix_random <= 1.0 and 0.0 <= self.mix_closeby <= 1.0):
            raise ScenarioError("mix fractions must lie in [0, 1]")
        if abs(self.mix_random + self.mix_closeby - 1.0) > 1e-9:
            raise ScenarioError("mix fractions must sum to 1")
        if self.replicas < 1:
            raise ScenarioError("replicas must be >= 1")
        if min(self.op_costs.count_mi, self.op_costs.get_mi, self.op_costs.closeby_mi_per_row) <= 0:
            raise ScenarioError("op costs must be positive")
        if not 0.0 <= self.base_load < 1.0:
            raise ScenarioError("base_load must lie in [0, 1)")
        if not 0.0 <= self.noise < 1.0:
            raise ScenarioError("noise must lie in [0, 1)")
        if self.metrics_step_s <= 0:
            raise ScenarioError("metrics_step_s must be positive")
        for fault in self.faults:
            if not 0 <= fault.replica_index < self.replicas:
                raise ScenarioError(f"fault replica_index {fault.replica_index} out of range")
            if not 0.0 <= fault.kill_at_s < self.duration_s:
                raise ScenarioError("fault kill_at_s must lie within the scenario duration")


def load_scenario(text: str) -> Scenario:
    """Parse a scenario JSON document; every problem is a scenario error."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario document: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document: top level must be an object")
    try:
        mix = doc.get("mix", {"getRandomCharger": 0.5, "getClosebyCharger": 0.5})
        costs = doc.get("opCosts", {})
        return Scenario(
            vehicles=doc["vehicles"],
            period_s=doc["periodSeconds"],
            duration_s=doc["durationSeconds"],
            mix_random=mix.get("getRandomCharger", 0.0),
            mix_closeby=mix.get("getClosebyCharger", 0.0),
            replicas=doc.get("replicas", 3),
            op_costs=OpCosts(
                count_mi=costs.get("countMi", 10.0),
                get_mi=costs.get("getMi", 20.0),
                closeby_mi_per_row=costs.get("closebyMiPerRow", 0.5),
            ),
            base_load=doc.get("baseLoad", 0.05),
            faults=tuple(
                Fault(replica_index=f["replicaIndex"], kill_at_s=f["killAtSeconds"])
                for f in doc.get("faults", [])
            ),
            rng_seed=doc.get("rngSeed", 0),
            noise=doc.get("noise", 0.0),
            service=doc.get("service", "charging-station"),
            metrics_step_s=doc.get("metricsStepSeconds", 1.0),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ScenarioError(f"scenario document: missing or malformed field ({exc})") from exc


def serialize_scenario(scenario: Scenario) -> str:
    doc = {
        "vehicles": scenario.vehicles,
        "periodSeconds": scenario.period_s,
        "durationSeconds": scenario.duration_s,
        "mix": {
            "getRandomCharger": scenario.mix_random,
            "getClosebyCharger": scenario.mix_closeby,
        },
        "replicas": scenario.replicas,
        "opCosts": {
            "countMi": scenario.op_costs.count_mi,
            "getMi": scenario.op_costs.get_mi,
            "closebyMiPerRow": scenario.op_costs.closeby_mi_per_row,
        },
        "baseLoad": scenario.base_load,
        "faults": [
            {"replicaIndex": f.replica_index, "killAtSeconds": f.kill_at_s}
            for f in scenario.faults
        ],
        "rngSeed": scenario.rng_seed,
        "noise": scenario.noise,
        "service": scenario.service,
        "metricsStepSeconds": scenario.metrics_step_s,
    }
    return json.dumps(doc, indent=2) + "\n"


def build_cluster_snapshot(
    scenario: Scenario, captured_at_us: int = DEFAULT_EPOCH_US
) -> ClusterSnapshot:
    """Desk-scale cluster layout: an admin node hosting the vehicle fleet pod
    plus one worker node per charging replica."""
    nodes = [NodeSpec(name="admin", cpu_cores=4, memory_mb=8192, role="admin")]
    pods = [PodSpec(name=f"{VEHICLE_SERVICE}-0", node="admin", service=VEHICLE_SERVICE, replica_index=0)]
    for i in range(scenario.replicas):
        worker = f"worker-{i + 1}"
        nodes.append(NodeSpec(name=worker, cpu_cores=2, memory_mb=4096, role="worker"))
        pods.append(
            PodSpec(name=f"{scenario.service}-{i}", node=worker, service=scenario.service, replica_index=i)
        )
    return ClusterSnapshot(nodes=tuple(nodes), pods=tuple(pods), captured_at_us=captured_at_us)


class _Call(NamedTuple):
    start_us: int
    vehicle: int
    seq: int
    trace_id: str
    operation: str
    cost_mi: float
    followup_cost_mi: float | None  # cost of the dependent call, if any


def _registry_bbox(registry: Registry):
    lats = [c.latitude for c in registry.chargers]
    lons = [c.longitude for c in registry.chargers]
    return min(lats), max(lats), min(lons), max(lons)


def run_scenario(
    registry: Registry,
    snapshot: ClusterSnapshot,
    scenario: Scenario,
    calib: CalibrationConfig | None = None,
) -> TelemetryBundle:
    """Execute a scenario and return the bundle of traces, metrics, snapshot."""
    calib = calib or CalibrationConfig()
    replica_pods = sorted(
        (p for p in snapshot.pods if p.service == scenario.service),
        key=lambda p: p.replica_index,
    )
    if len(replica_pods) != scenario.replicas:
        raise ScenarioError(
            f"snapshot has {len(replica_pods)} pods for service {scenario.service!r}, "
            f"scenario expects {scenario.replicas}"
        )
    vehicle_pods = [p for p in snapshot.pods if p.service != scenario.service]

    period_us = round(scenario.period_s * 1e6)
    duration_us = round(scenario.duration_s * 1e6)
    ticks = []
    for v in range(scenario.vehicles):
        t = (v * period_us) // scenario.vehicles  # stagger fleet phases
        while t < duration_us:
            ticks.append((t, v))
            t += period_us
    ticks.sort()
    if ticks and not registry.chargers:
        raise ScenarioError("empty registry with traffic scheduled")

    node_rating = {
        n.name: (n.mips_per_core if n.mips_per_core is not None else calib.mips_per_core)
        for n in snapshot.nodes
    }
    count = charger_count(registry)
    bbox = _registry_bbox(registry) if registry.chargers else None

    rng = random.Random(f"{scenario.rng_seed}:behavior")
    queue: list[_Call] = []
    for tick_idx, (t, v) in enumerate(ticks):
        trace_id = f"trace-{tick_idx:06d}"
        if rng.random() < scenario.mix_random:
            rng.randrange(count)  # the queried charger id; cost is id-independent
            queue.append(_Call(t, v, 0, trace_id, OP_COUNT, scenario.op_costs.count_mi,
                               scenario.op_costs.get_mi))
        else:
            rng.uniform(bbox[0], bbox[1])  # query latitude within registry bounds
            rng.uniform(bbox[2], bbox[3])  # query longitude
            cost = scenario.op_costs.closeby_mi_per_row * count
            queue.append(_Call(t, v, 0, trace_id, OP_CLOSEBY, cost, None))

    # Dispatch strictly in call-start order so round-robin balance holds
    # over any time prefix; a follow-up call enters the queue once its
    # predecessor's response time is known.
    heapq.heapify(queue)
    spans: list[Span] = []
    rr = 0
    dispatched = 0
    while queue:
        call = heapq.heappop(queue)
        pod = replica_pods[rr % len(replica_pods)]
        rr += 1
        rate = node_rating[pod.node]
        duration = max(1, round(call.cost_mi / rate * 1e6))
        start_wall = snapshot.captured_at_us + call.start_us
        server_id = f"s{dispatched:07d}"
        client_id = f"c{dispatched:07d}"
        dispatched += 1
        if vehicle_pods:
            client_pod = vehicle_pods[call.vehicle % len(vehicle_pods)]
            spans.append(
                Span(
                    trace_id=call.trace_id,
                    span_id=client_id,
                    operation=call.operation,
                    service_instance=client_pod.name,
                    node=client_pod.node,
                    start_us=start_wall,
                    duration_us=duration,
                    kind="client",
                )
            )
        spans.append(
            Span(
                trace_id=call.trace_id,
                span_id=server_id,
                operation=call.operation,
                service_instance=pod.name,
                node=pod.node,
                start_us=start_wall,
                duration_us=duration,
                kind="server",
                parent_span_id=client_id if vehicle_pods else None,
            )
        )
        if call.followup_cost_mi is not None:
            heapq.heappush(
                queue,
                _Call(call.start_us + duration, call.vehicle, call.seq + 1,
                      call.trace_id, OP_GET, call.followup_cost_mi, None),
            )
    spans.sort(key=lambda s: (s.start_us, s.span_id))

    # Ground truth: same derivation and engine as the mirror, but on the
    # true configuration (faults applied), plus background node load.
    server_spans = [s for s in spans if s.kind == "server"]
    cloudlets, epoch_us = derive_cloudlets(server_spans, snapshot, calib)
    hosts, vms, pod_to_vm = build_datacenter(snapshot, calib)
    cloudlets = _apply_faults(cloudlets, scenario, epoch_us, replica_pods, hosts, vms, snapshot)
    result = run(hosts, vms, cloudlets)

    step_us = round(scenario.metrics_step_s * 1e6)
    noise_rng = random.Random(f"{scenario.rng_seed}:noise")
    metrics = []
    for pod in snapshot.pods:
        series = utilization_series(result, pod_to_vm[pod.name], step_us, t0_us=epoch_us)
        if scenario.base_load > 0.0 or scenario.noise > 0.0:
            values = []
            for v in series.values:
                x = v + scenario.base_load
                if scenario.noise > 0.0:
                    x += noise_rng.uniform(-scenario.noise, scenario.noise)
                values.append(min(1.0, max(0.0, x)))
            series = TimeSeries(series.subject, series.metric, series.t0_us, series.step_us, values)
        metrics.append(series)
    return TelemetryBundle(spans=spans, metrics=metrics, snapshot=snapshot)


def _apply_faults(cloudlets, scenario, epoch_us, replica_pods, hosts, vms, snapshot):
    """Apply replica kills to the derived workload.

    Calls dispatched to a killed replica at or after its kill time fail and
    are removed.  Calls already running at the kill instant move to the
    surviving replicas (round-robin); engine reruns confirm the fixpoint
    where no work intersects any post-kill lifetime.
    """
    if not scenario.faults:
        return cloudlets
    by_index = {p.replica_index: p for p in replica_pods}
    kill_off: dict[str, int] = {}
    for fault in scenario.faults:
        pod = by_index.get(fault.replica_index)
        if pod is None:
            raise ScenarioError(f"fault references replica index {fault.replica_index} "
                                f"absent from the snapshot")
        kill_wall = snapshot.captured_at_us + round(fault.kill_at_s * 1e6)
        kill_off[pod.name] = kill_wall - epoch_us
    survivors = [p.name for p in replica_pods if p.name not in kill_off]

    current = []
    had_lost_traffic = False
    for c in cloudlets:
        kill = kill_off.get(c.vm_id)
        if kill is not None and c.start_offset_us >= kill:
            had_lost_traffic = True
            continue
        current.append(c)
    if had_lost_traffic and not survivors:
        raise ScenarioError("all replicas killed with traffic remaining")

    rr = 0
    while True:
        result = run(hosts, vms, current)
        moved_any = False
        moved = []
        for c in current:
            kill = kill_off.get(c.vm_id)
            if kill is not None and result.records[c.id].finish_us > kill:
                if not survivors:
                    raise ScenarioError("all replicas killed with traffic remaining")
                moved.append(replace(c, vm_id=survivors[rr % len(survivors)]))
                rr += 1
                moved_any = True
            else:
                moved.append(c)
        current = moved
        if not moved_any:
            return current
