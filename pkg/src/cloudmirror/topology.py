"""Cluster snapshots: nodes, pod placements, and their simulation mapping.

A snapshot is the file-based stand-in for querying the orchestrator API.
The JSON layout is fixed: top-level keys ``nodes`` (array of {``name``,
``cpuCores``, ``memoryMb``, ``role``, optional ``mipsPerCore``}), ``pods``
(array of {``name``, ``node``, ``service``, ``replicaIndex``}) and
``capturedAtMicros``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigError, ParseError, ValidationError

NODE_ROLES = ("admin", "worker")


@dataclass(frozen=True)
class NodeSpec:
    name: str
    cpu_cores: int
    memory_mb: int
    role: str
    mips_per_core: float | None = None  # optional per-node calibration override


@dataclass(frozen=True)
class PodSpec:
    name: str
    node: str
    service: str
    replica_index: int


@dataclass(frozen=True)
class ClusterSnapshot:
    nodes: tuple[NodeSpec, ...]
    pods: tuple[PodSpec, ...]
    captured_at_us: int

    def node_of(self, pod_name: str) -> str:
        for pod in self.pods:
            if pod.name == pod_name:
                return pod.node
        raise ValidationError(f"unknown pod {pod_name!r}")


@dataclass(frozen=True)
class CalibrationConfig:
    """Calibration the cluster API cannot provide: an instruction rating.

    mips_per_core applies to every node unless the snapshot overrides it
    per node; busy_fraction discounts recorded span durations that include
    wait time.
    """

    mips_per_core: float = 1000.0
    vm_cores_per_pod: int = 1
    vm_memory_mb: int = 512
    busy_fraction: float = 1.0

    def __post_init__(self):
        if self.mips_per_core <= 0:
            raise ConfigError("mips_per_core must be positive")
        if self.vm_cores_per_pod < 1:
            raise ConfigError("vm_cores_per_pod must be >= 1")
        if self.vm_memory_mb < 1:
            raise ConfigError("vm_memory_mb must be >= 1")
        if not 0.0 < self.busy_fraction <= 1.0:
            raise ConfigError("busy_fraction must be in (0, 1]")


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise ValidationError(f"{where}: missing {key!r}")
    return record[key]


def parse_snapshot(text: str) -> ClusterSnapshot:
    """Parse and validate a snapshot document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"snapshot document: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("snapshot document: top level must be an object")

    nodes = []
    names = set()
    for i, rec in enumerate(doc.get("nodes", [])):
        where = f"node[{i}]"
        name = _require(rec, "name", where)
        cores = _require(rec, "cpuCores", where)
        memory = _require(rec, "memoryMb", where)
        role = _require(rec, "role", where)
        if not isinstance(cores, int) or cores < 1:
            raise ValidationError(f"{where} {name!r}: cpuCores must be a positive integer")
        if not isinstance(memory, int) or memory < 1:
            raise ValidationError(f"{where} {name!r}: memoryMb must be a positive integer")
        if role not in NODE_ROLES:
            raise ValidationError(f"{where} {name!r}: role must be one of {NODE_ROLES}")
        if name in names:
            raise ValidationError(f"duplicate node name {name!r}")
        names.add(name)
        mips = rec.get("mipsPerCore")
        if mips is not None and (not isinstance(mips, (int, float)) or mips <= 0):
            raise ValidationError(f"{where} {name!r}: mipsPerCore must be positive")
        nodes.append(NodeSpec(name, cores, memory, role, float(mips) if mips is not None else None))
    if not nodes:
        raise ValidationError("snapshot must contain at least one node")

    pods = []
    pod_names = set()
    service_replicas = set()
    for i, rec in enumerate(doc.get("pods", [])):
        where = f"pod[{i}]"
        name = _require(rec, "name", where)
        node = _require(rec, "node", where)
        service = _require(rec, "service", where)
        replica = _require(rec, "replicaIndex", where)
        if node not in names:
            raise ValidationError(f"pod {name!r} references unknown node {node!r}")
        if not isinstance(replica, int) or replica < 0:
            raise ValidationError(f"pod {name!r}: replicaIndex must be a non-negative integer")
        if name in pod_names:
            raise ValidationError(f"duplicate pod name {name!r}")
        if (service, replica) in service_replicas:
            raise ValidationError(f"duplicate replica ({service!r}, {replica}) for pod {name!r}")
        pod_names.add(name)
        service_replicas.add((service, replica))
        pods.append(PodSpec(name, node, service, replica))

    captured = doc.get("capturedAtMicros", 0)
    if not isinstance(captured, int) or captured < 0:
        raise ValidationError("capturedAtMicros must be a non-negative integer")
    return ClusterSnapshot(nodes=tuple(nodes), pods=tuple(pods), captured_at_us=captured)


def serialize_snapshot(snapshot: ClusterSnapshot) -> str:
    doc = {
        "nodes": [
            {
                "name": n.name,
                "cpuCores": n.cpu_cores,
                "memoryMb": n.memory_mb,
                "role": n.role,
                **({"mipsPerCore": n.mips_per_core} if n.mips_per_core is not None else {}),
            }
            for n in snapshot.nodes
        ],
        "pods": [
            {"name": p.name, "node": p.node, "service": p.service, "replicaIndex": p.replica_index}
            for p in snapshot.pods
        ],
        "capturedAtMicros": snapshot.captured_at_us,
    }
    return json.dumps(doc, indent=2) + "\n"


def build_datacenter(snapshot: ClusterSnapshot, calib: CalibrationConfig):
    """Map the snapshot onto simulation hosts and VMs.

    One host per node (rating from the node override or the calibration),
    one single-rate VM per pod on its node's host.  Returns (hosts, vms,
    pod name -> vm id map); the map is a bijection.
    """
    from .engine import Host, Vm  # deferred: engine imports telemetry, which imports topology

    hosts = []
    rating = {}
    for node in snapshot.nodes:
        mips = node.mips_per_core if node.mips_per_core is not None else calib.mips_per_core
        rating[node.name] = mips
        hosts.append(Host(id=node.name, cores=node.cpu_cores, mips_per_core=mips, memory_mb=node.memory_mb))

    per_node: dict[str, int] = {}
    vms = []
    pod_to_vm: dict[str, str] = {}
    node_by_name = {n.name: n for n in snapshot.nodes}
    for pod in snapshot.pods:
        node = node_by_name[pod.node]
        per_node[pod.node] = per_node.get(pod.node, 0) + 1
        if per_node[pod.node] > node.cpu_cores * calib.vm_cores_per_pod:
            raise ConfigError(
                f"node {node.name!r} overcommitted: {per_node[pod.node]} pods exceed "
                f"{node.cpu_cores} cores x {calib.vm_cores_per_pod} VM cores per pod"
            )
        vms.append(
            Vm(
                id=pod.name,
                host_id=pod.node,
                cores=calib.vm_cores_per_pod,
                mips_per_core=rating[pod.node],
                memory_mb=calib.vm_memory_mb,
            )
        )
        pod_to_vm[pod.name] = pod.name
    return hosts, vms, pod_to_vm
