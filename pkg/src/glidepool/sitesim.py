"""Simulated compute elements and worker nodes.

Pilots queue at a site's CE, get granted whole nodes, discover their GPUs
and register a partitionable slot. Slots are carved into claims, gated by
the GPU hold window, and end by retirement or walltime expiry.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .adlang import MACHINE, ClassAd, parse_expression
from .model import (
    FactoryEntry, GpuUseClass, JobAd, NodeSpec, PostWindow, SitePolicy, classify_gpu_use,
)

GPU_START_EXPR = parse_expression("MY.GpuHoldActive == false || TARGET.RequestGPUs > 0")


class PilotState(str, enum.Enum):
    QUEUED_AT_CE = "QueuedAtCE"
    STARTING = "Starting"
    REGISTERED = "Registered"
    RETIRING = "Retiring"
    RETIRED = "Retired"
    CANCELLED = "Cancelled"
    WALLTIME_EXPIRED = "WalltimeExpired"


TRANSITIONS = {
    PilotState.QUEUED_AT_CE: {PilotState.STARTING, PilotState.CANCELLED},
    PilotState.STARTING: {PilotState.REGISTERED},
    PilotState.REGISTERED: {PilotState.RETIRING, PilotState.WALLTIME_EXPIRED},
    PilotState.RETIRING: {PilotState.RETIRED},
    PilotState.RETIRED: set(),
    PilotState.CANCELLED: set(),
    PilotState.WALLTIME_EXPIRED: set(),
}


class IllegalTransition(RuntimeError):
    pass


@dataclass
class Pilot:
    id: str
    entry_name: str
    site_name: str
    submit_time: int
    walltime_limit_secs: int = 0
    state: PilotState = PilotState.QUEUED_AT_CE
    start_time: Optional[int] = None
    end_time: Optional[int] = None
    node_id: Optional[str] = None
    history: List[Tuple[PilotState, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.history:
            self.history.append((self.state, self.submit_time))

    def advance(self, new: PilotState, clock: int) -> None:
        if new not in TRANSITIONS[self.state]:
            raise IllegalTransition(f"pilot {self.id}: {self.state.value} -> {new.value}")
        if clock < self.history[-1][1]:
            raise IllegalTransition(f"pilot {self.id}: time went backwards ({clock})")
        self.state = new
        self.history.append((new, clock))
        if new in (PilotState.RETIRED, PilotState.CANCELLED, PilotState.WALLTIME_EXPIRED):
            self.end_time = clock


def is_legal_path(states: Sequence[str]) -> bool:
    """Whether a sequence of state names walks the pilot transition relation."""
    try:
        seq = [PilotState(s) for s in states]
    except ValueError:
        return False
    if not seq or seq[0] is not PilotState.QUEUED_AT_CE:
        return False
    return all(b in TRANSITIONS[a] for a, b in zip(seq, seq[1:]))


# --------------------------------------------------------------------------
# compute element


def node_fits_entry(node: NodeSpec, entry: FactoryEntry) -> bool:
    """A node can host a pilot of ``entry``.

    GPU entries reach GPU nodes only and CPU entries CPU nodes only, the way
    sites route GPU requests through dedicated queues.
    """
    if node.arch != entry.arch:
        return False
    if node.cpus < entry.glidein_cpus or node.memory_mb < entry.submit_attrs.max_memory:
        return False
    if entry.is_gpu_entry:
        return len(node.gpus) >= entry.gpu_count
    return not node.gpus


def ce_tick(queue: Sequence[Pilot], free_nodes: Sequence[NodeSpec], clock: int,
            entries: Mapping[str, FactoryEntry]) -> List[Tuple[Pilot, NodeSpec]]:
    """Grant queued pilots to free nodes, oldest submission first."""
    grants = []
    available = list(free_nodes)
    for pilot in sorted(queue, key=lambda p: (p.submit_time, p.id)):
        if pilot.state is not PilotState.QUEUED_AT_CE:
            continue
        entry = entries[pilot.entry_name]
        for i, node in enumerate(available):
            if node_fits_entry(node, entry):
                del available[i]
                pilot.advance(PilotState.STARTING, clock)
                pilot.start_time = clock
                pilot.node_id = node.node_id
                pilot.walltime_limit_secs = entry.glidein_max_walltime_secs
                grants.append((pilot, node))
                break
    return grants


def cancel_pilot(pilot: Pilot, clock: int) -> None:
    pilot.advance(PilotState.CANCELLED, clock)


# --------------------------------------------------------------------------
# startup


def _numeric_version(text: str) -> Any:
    try:
        return float(text)
    except ValueError:
        return text


def gpu_discover(node: NodeSpec) -> Dict[str, Any]:
    """Attributes the GPU discovery step and the runtime probe would report."""
    if not node.gpus:
        return {"GPUs": 0}
    dev = node.gpus[0]
    return {
        "GPUs": len(node.gpus),
        "CUDACapability": dev.cuda_capability,
        "CUDAClockMhz": dev.clock_mhz,
        "CUDAComputeUnits": dev.compute_units,
        "CUDACoresPerCU": dev.cores_per_cu,
        "CUDADeviceName": dev.device_name,
        "CUDADriverVersion": _numeric_version(dev.driver_version),
        "CUDAECCEnabled": dev.ecc_enabled,
        "CUDAGlobalMemoryMB": dev.global_memory_mb,
        "CUDAMaxSupportedVersion": dev.max_supported_version,
        "CMS_CUDA_SUPPORTED_RUNTIMES": ",".join(dev.supported_runtimes),
        "CMS_NVIDIA_DRIVER_VERSION": dev.nvidia_driver_version,
    }


def slot_id_for(pilot: Pilot) -> str:
    return f"slot@{pilot.id}"


def build_slot_ad(pilot: Pilot, node: NodeSpec, entry: FactoryEntry, policy: SitePolicy,
                  clock: int) -> ClassAd:
    """Machine ad for the slot a starting pilot is about to advertise."""
    discovered = gpu_discover(node)
    gpu_slot = discovered["GPUs"] > 0
    attrs: Dict[str, Any] = {
        "Name": slot_id_for(pilot),
        "CPUs": entry.glidein_cpus,
        "TotalSlotMemory": entry.submit_attrs.max_memory,
        "Arch": node.arch,
        "GLIDEIN_CMSSite": entry.cms_site,
        "GLIDEIN_Entry_Name": entry.name,
        "SlotStartTime": clock,
    }
    attrs.update(discovered)
    attrs["GpuHoldActive"] = gpu_slot and policy.hold_window_secs > 0
    attrs["Start"] = GPU_START_EXPR if gpu_slot else True
    return ClassAd(attrs, kind=MACHINE)


@dataclass(frozen=True)
class Claim:
    job_id: str
    cpus: int
    memory_mb: int
    gpu_uuids: Tuple[str, ...]
    start_time: int
    end_time: int
    use_class: GpuUseClass = GpuUseClass.CPU_ONLY


@dataclass
class SlotState:
    slot_id: str
    pilot_id: str
    parent_ad: ClassAd
    total_cpus: int
    total_memory_mb: int
    gpu_uuids: Tuple[str, ...]
    free_cpus: int
    free_memory_mb: int
    free_gpu_uuids: Tuple[str, ...]
    gpu_hold_active: bool
    start_time: int
    walltime_limit_secs: int
    hold_window_secs: int
    site_name: str = ""
    node_id: str = ""
    arch: str = ""
    claims: List[Claim] = field(default_factory=list)
    gpu_ever_claimed: bool = False
    retiring: bool = False
    hold_processed: bool = False

    @property
    def ad(self) -> ClassAd:
        return self.parent_ad

    @property
    def is_gpu_slot(self) -> bool:
        return bool(self.gpu_uuids)

    @property
    def walltime_end(self) -> int:
        return self.start_time + self.walltime_limit_secs

    @property
    def hold_end(self) -> int:
        return self.start_time + self.hold_window_secs

    def snapshot(self) -> "SlotState":
        return _copy_slot(self)

    def balanced(self) -> bool:
        """Free plus claimed equals the advertised totals."""
        return (self.free_cpus + sum(c.cpus for c in self.claims) == self.total_cpus
                and self.free_memory_mb + sum(c.memory_mb for c in self.claims) == self.total_memory_mb
                and len(self.free_gpu_uuids) + sum(len(c.gpu_uuids) for c in self.claims)
                == len(self.gpu_uuids))


def _copy_slot(s: SlotState) -> SlotState:
    c = copy.copy(s)
    c.claims = list(s.claims)
    return c


def register_slot(pilot: Pilot, node: NodeSpec, entry: FactoryEntry, policy: SitePolicy,
                  clock: int) -> SlotState:
    """Build the slot ad, move the pilot to Registered and return the live slot."""
    ad = build_slot_ad(pilot, node, entry, policy, clock)
    pilot.advance(PilotState.REGISTERED, clock)
    uuids = tuple(sorted(g.uuid for g in node.gpus))
    hold = bool(uuids) and policy.hold_window_secs > 0
    return SlotState(
        slot_id=slot_id_for(pilot),
        pilot_id=pilot.id,
        parent_ad=ad,
        total_cpus=entry.glidein_cpus,
        total_memory_mb=entry.submit_attrs.max_memory,
        gpu_uuids=uuids,
        free_cpus=entry.glidein_cpus,
        free_memory_mb=entry.submit_attrs.max_memory,
        free_gpu_uuids=uuids,
        gpu_hold_active=hold,
        start_time=clock,
        walltime_limit_secs=pilot.walltime_limit_secs,
        hold_window_secs=policy.hold_window_secs if uuids else 0,
        site_name=entry.cms_site,
        node_id=node.node_id,
        arch=node.arch,
        hold_processed=not uuids,
    )


# --------------------------------------------------------------------------
# claims


def gpus_to_assign(job: JobAd, free: int) -> Optional[int]:
    """How many GPUs a job takes from ``free``; None when it cannot fit."""
    cls = classify_gpu_use(job)
    if cls is GpuUseClass.MUST_USE_GPU:
        return job.request_gpus if job.request_gpus <= free else None
    if cls is GpuUseClass.CAN_USE_GPU:
        return min(job.request_gpus, free)
    return 0


def plan_claim(slot: SlotState, job: JobAd, clock: int) -> Optional[Claim]:
    """The claim ``carve`` would make, without touching the slot."""
    if slot.retiring:
        return None
    if job.request_cpus > slot.free_cpus or job.request_memory_mb > slot.free_memory_mb:
        return None
    if slot.walltime_end - clock < job.max_wall_time_secs:
        return None
    n = gpus_to_assign(job, len(slot.free_gpu_uuids))
    if n is None:
        return None
    return Claim(
        job_id=job.id,
        cpus=job.request_cpus,
        memory_mb=job.request_memory_mb,
        gpu_uuids=tuple(slot.free_gpu_uuids[:n]),  # lowest uuid first
        start_time=clock,
        end_time=clock + job.run_time_secs,
        use_class=classify_gpu_use(job),
    )


def carve(slot: SlotState, job: JobAd, clock: int) -> Optional[Claim]:
    """Reserve resources for ``job`` on ``slot``; None on no-fit."""
    claim = plan_claim(slot, job, clock)
    if claim is None:
        return None
    slot.free_cpus -= claim.cpus
    slot.free_memory_mb -= claim.memory_mb
    taken = set(claim.gpu_uuids)
    slot.free_gpu_uuids = tuple(u for u in slot.free_gpu_uuids if u not in taken)
    if claim.gpu_uuids:
        slot.gpu_ever_claimed = True
    slot.claims.append(claim)
    return claim


def release(slot: SlotState, job_id: str) -> Claim:
    """Return a claim's resources to the slot."""
    for i, claim in enumerate(slot.claims):
        if claim.job_id == job_id:
            del slot.claims[i]
            break
    else:
        raise KeyError(f"{slot.slot_id}: no claim for job {job_id}")
    slot.free_cpus += claim.cpus
    slot.free_memory_mb += claim.memory_mb
    slot.free_gpu_uuids = tuple(sorted(slot.free_gpu_uuids + claim.gpu_uuids))
    return claim


# --------------------------------------------------------------------------
# lifecycle


@dataclass
class TickOutcome:
    events: List[Tuple[str, Dict[str, Any]]] = field(default_factory=list)
    killed: List[Claim] = field(default_factory=list)
    ended: bool = False


def _set_hold(slot: SlotState, active: bool) -> None:
    slot.gpu_hold_active = active
    slot.parent_ad = slot.parent_ad.updated(GpuHoldActive=active)


def slot_tick(slot: SlotState, pilot: Pilot, policy: SitePolicy, clock: int) -> TickOutcome:
    """Apply whatever lifecycle step is due at ``clock``."""
    out = TickOutcome()
    if pilot.state not in (PilotState.REGISTERED, PilotState.RETIRING):
        return out

    if clock >= slot.walltime_end and pilot.state is PilotState.REGISTERED:
        for claim in list(slot.claims):
            out.killed.append(release(slot, claim.job_id))
        pilot.advance(PilotState.WALLTIME_EXPIRED, clock)
        out.events.append(("PilotWalltimeExpired", {
            "pilotId": pilot.id, "slotId": slot.slot_id,
            "killedJobIds": [c.job_id for c in out.killed],
        }))
        out.ended = True
        return out

    if not slot.hold_processed and clock >= slot.hold_end:
        slot.hold_processed = True
        retire = policy.post_window is PostWindow.RETURN_TO_SITE and not slot.gpu_ever_claimed
        if retire:
            slot.retiring = True
            pilot.advance(PilotState.RETIRING, clock)
        else:
            # the slot stays: CPU work may now fill whatever the GPUs leave over
            _set_hold(slot, False)
        out.events.append(("HoldWindowExpired", {
            "slotId": slot.slot_id, "pilotId": pilot.id,
            "policy": policy.post_window.value,
            "action": "retire" if retire else "open",
        }))

    if pilot.state is PilotState.RETIRING and not slot.claims:
        pilot.advance(PilotState.RETIRED, clock)
        out.events.append(("SlotRetired", {
            "slotId": slot.slot_id, "pilotId": pilot.id, "reason": "ReturnToSite",
        }))
        out.ended = True
    return out
