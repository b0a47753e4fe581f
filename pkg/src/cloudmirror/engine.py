"""Deterministic discrete-event simulation of cloudlets on VMs.

Scheduling is time-shared (processor sharing): at every instant a VM's
capacity (cores x mips_per_core) is split equally among its active
cloudlets, each share capped at required_cores x mips_per_core.  Shares
are recomputed only at arrival and completion events, so the resulting
utilization profile is exact and piecewise constant, not sampled.

Time is kept in integer microseconds; remaining work in double-precision
million instructions (MI).  A cloudlet completes once its remaining work
drops to COMPLETION_EPS_MI or below, and completion events are rounded up
to the next microsecond.  Within an event interval a cloudlet never
receives more work than it has left, which keeps the work integral of the
utilization profile equal to the submitted MI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, NotFoundError, ValidationError
from .telemetry import TimeSeries

COMPLETION_EPS_MI = 1e-6
US_PER_S = 1_000_000


@dataclass(frozen=True)
class Host:
    """A physical node offering processing elements to VMs."""

    id: str
    cores: int
    mips_per_core: float
    memory_mb: int


@dataclass(frozen=True)
class Vm:
    """A virtual machine pinned to one host."""

    id: str
    host_id: str
    cores: int
    mips_per_core: float
    memory_mb: int


@dataclass(frozen=True)
class Cloudlet:
    """One unit of work: length in MI, executed on a target VM."""

    id: int
    vm_id: str
    length_mi: float
    start_offset_us: int = 0
    required_cores: int = 1


@dataclass(frozen=True)
class CloudletRecord:
    cloudlet_id: int
    vm_id: str
    arrival_us: int
    finish_us: int


@dataclass(frozen=True)
class AllocationSlice:
    """MIPS granted per cloudlet on one VM over one inter-event interval."""

    start_us: int
    end_us: int
    shares_mips: tuple[tuple[int, float], ...]  # (cloudlet id, mips), ascending id


@dataclass
class SimResult:
    """Outcome of one simulation run; treat as immutable once returned.

    utilization maps vm id to contiguous, ascending (start_us, end_us,
    fraction) intervals from 0 up to the VM's last activity; idle time at
    the end is not materialized, and a never-active VM has an empty list.
    """

    records: dict[int, CloudletRecord]
    utilization: dict[str, list[tuple[int, int, float]]]
    allocations: dict[str, list[AllocationSlice]]
    end_us: int


def _validate(hosts, vms, cloudlets):
    host_by_id: dict[str, Host] = {}
    for h in hosts:
        if h.id in host_by_id:
            raise ValidationError(f"duplicate host id {h.id!r}")
        if h.cores < 1 or h.mips_per_core <= 0:
            raise ValidationError(f"host {h.id!r}: cores and mips_per_core must be positive")
        host_by_id[h.id] = h

    vm_by_id: dict[str, Vm] = {}
    cores_used: dict[str, int] = {h: 0 for h in host_by_id}
    for vm in vms:
        if vm.id in vm_by_id:
            raise ValidationError(f"duplicate vm id {vm.id!r}")
        host = host_by_id.get(vm.host_id)
        if host is None:
            raise ValidationError(f"vm {vm.id!r} placed on unknown host {vm.host_id!r}")
        if vm.cores < 1 or vm.mips_per_core <= 0:
            raise ValidationError(f"vm {vm.id!r}: cores and mips_per_core must be positive")
        if vm.mips_per_core > host.mips_per_core:
            raise ConfigError(
                f"vm {vm.id!r} rated {vm.mips_per_core} MIPS/core exceeds host "
                f"{host.id!r} rating {host.mips_per_core}"
            )
        cores_used[vm.host_id] += vm.cores
        if cores_used[vm.host_id] > host.cores:
            raise ConfigError(
                f"host {host.id!r} overcommitted: {cores_used[vm.host_id]} VM cores "
                f"on {host.cores} host cores"
            )
        vm_by_id[vm.id] = vm

    seen_cl: set[int] = set()
    for c in cloudlets:
        if c.id in seen_cl:
            raise ValidationError(f"duplicate cloudlet id {c.id}")
        seen_cl.add(c.id)
        vm = vm_by_id.get(c.vm_id)
        if vm is None:
            raise ValidationError(f"cloudlet {c.id} targets unknown vm {c.vm_id!r}")
        if c.length_mi <= 0:
            raise ValidationError(f"cloudlet {c.id}: length_mi must be positive")
        if c.start_offset_us < 0:
            raise ValidationError(f"cloudlet {c.id}: negative start offset")
        if c.required_cores < 1 or c.required_cores > vm.cores:
            raise ValidationError(
                f"cloudlet {c.id}: required_cores {c.required_cores} outside 1..{vm.cores}"
            )
    return vm_by_id


def run(hosts: list[Host], vms: list[Vm], cloudlets: list[Cloudlet]) -> SimResult:
    """Simulate all cloudlets to completion and return exact utilization."""
    vm_by_id = _validate(hosts, vms, cloudlets)
    cl_by_id = {c.id: c for c in cloudlets}
    vm_cap = {vm.id: vm.cores * vm.mips_per_core for vm in vm_by_id.values()}

    pending = sorted(cloudlets, key=lambda c: (c.start_offset_us, c.id))
    active: dict[str, list[int]] = {vm_id: [] for vm_id in vm_by_id}
    remaining: dict[int, float] = {}
    share: dict[int, float] = {}
    profile: dict[str, list[tuple[int, int, float]]] = {vm_id: [] for vm_id in vm_by_id}
    alloc_log: dict[str, list[AllocationSlice]] = {vm_id: [] for vm_id in vm_by_id}
    arrival_us: dict[int, int] = {}
    finish_us: dict[int, int] = {}

    def recompute_shares() -> None:
        share.clear()
        for vm_id, ids in active.items():
            if not ids:
                continue
            vm = vm_by_id[vm_id]
            equal = vm_cap[vm_id] / len(ids)
            for cid in ids:
                cap = min(cl_by_id[cid].required_cores, vm.cores) * vm.mips_per_core
                share[cid] = equal if equal < cap else cap

    now = 0
    next_arrival_idx = 0
    n_active = 0
    while n_active > 0 or next_arrival_idx < len(pending):
        t_next = pending[next_arrival_idx].start_offset_us if next_arrival_idx < len(pending) else None
        for ids in active.values():
            for cid in ids:
                dt = math.ceil((remaining[cid] - COMPLETION_EPS_MI) / share[cid] * US_PER_S)
                if dt <= 0:
                    # due now if at the threshold; one tick ahead if the
                    # projection underflowed, so the loop always advances
                    dt = 0 if remaining[cid] <= COMPLETION_EPS_MI else 1
                cand = now + dt
                if t_next is None or cand < t_next:
                    t_next = cand

        if t_next > now:
            dt_s = (t_next - now) / US_PER_S
            for vm_id, ids in active.items():
                work = 0.0
                for cid in ids:
                    done = share[cid] * dt_s
                    if done > remaining[cid]:
                        done = remaining[cid]
                    remaining[cid] -= done
                    work += done
                util = work / (vm_cap[vm_id] * dt_s)
                profile[vm_id].append((now, t_next, util if util < 1.0 else 1.0))
                if ids:
                    alloc_log[vm_id].append(
                        AllocationSlice(now, t_next, tuple((cid, share[cid]) for cid in ids))
                    )
            now = t_next

        # Completions strictly before arrivals at equal timestamps.
        for vm_id, ids in active.items():
            done_ids = [cid for cid in ids if remaining[cid] <= COMPLETION_EPS_MI]
            for cid in done_ids:
                ids.remove(cid)
                del remaining[cid]
                finish_us[cid] = now
                n_active -= 1
        while next_arrival_idx < len(pending) and pending[next_arrival_idx].start_offset_us == now:
            c = pending[next_arrival_idx]
            active[c.vm_id].append(c.id)
            active[c.vm_id].sort()
            remaining[c.id] = c.length_mi
            arrival_us[c.id] = now
            n_active += 1
            next_arrival_idx += 1
        recompute_shares()

    records = {
        cid: CloudletRecord(cid, cl_by_id[cid].vm_id, arrival_us[cid], finish_us[cid])
        for cid in sorted(finish_us)
    }
    merged = {vm_id: _merge_intervals(iv) for vm_id, iv in profile.items()}
    return SimResult(records=records, utilization=merged, allocations=alloc_log, end_us=now)


def _merge_intervals(intervals):
    out: list[tuple[int, int, float]] = []
    for start, end, util in intervals:
        if start == end:
            continue
        if out and out[-1][2] == util and out[-1][1] == start:
            out[-1] = (out[-1][0], end, util)
        else:
            out.append((start, end, util))
    # trailing idle time belongs to the run, not the VM: without this, work
    # on one VM would lengthen every other VM's profile
    if out and out[-1][2] == 0.0:
        out.pop()
    return out


def utilization_series(
    result: SimResult,
    vm_id: str,
    bucket_us: int,
    t0_us: int = 0,
    metric: str = "cpu_utilization",
) -> TimeSeries:
    """Bucket a VM's exact profile into fixed-step time-weighted means.

    The series spans the whole simulation [0, end_us); time past the end of
    the profile (and past end_us inside the final bucket) counts as 0.0.
    """
    if bucket_us <= 0:
        raise ValueError("bucket_us must be positive")
    if vm_id not in result.utilization:
        raise NotFoundError(f"no utilization recorded for vm {vm_id!r}")
    if result.end_us == 0:
        return TimeSeries(subject=vm_id, metric=metric, t0_us=t0_us, step_us=bucket_us, values=[])

    n = -(-result.end_us // bucket_us)
    acc = [0.0] * n
    for start, end, util in result.utilization[vm_id]:
        if util == 0.0:
            continue
        k = start // bucket_us
        while k * bucket_us < end:
            lo = max(start, k * bucket_us)
            hi = min(end, (k + 1) * bucket_us)
            acc[k] += util * (hi - lo)
            k += 1
    values = [min(1.0, a / bucket_us) for a in acc]
    return TimeSeries(subject=vm_id, metric=metric, t0_us=t0_us, step_us=bucket_us, values=values)
