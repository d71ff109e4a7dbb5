"""Utilisation and wastage figures computed from an event log."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .config import ScenarioConfig
from .events import Event


@dataclass(frozen=True)
class Metrics:
    jobsCompleted: int
    meanJobWaitSecs: float
    peakConcurrentGpusInUse: int
    uniqueGpusUsed: int
    gpuIdleSecs: int
    pilotWastedWalltimeSecs: int
    cpuUtilization: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ClaimInterval:
    job_id: str
    slot_id: str
    start: int
    end: int
    cpus: int
    gpu_uuids: Tuple[str, ...]


@dataclass(frozen=True)
class SlotInterval:
    slot_id: str
    pilot_id: str
    start: int
    end: int
    cpus: int
    gpu_uuids: Tuple[str, ...]
    ended: bool  # retired or expired before the run stopped


def claim_intervals(events: Iterable[Event], end_time: int) -> List[ClaimInterval]:
    """Every claim as [start, end); claims still running stop at ``end_time``."""
    open_: Dict[str, Tuple[Event, int]] = {}
    out: List[ClaimInterval] = []
    for ev in events:
        p = ev.payload
        if ev.kind == "JobStarted":
            open_[p["jobId"]] = (ev, ev.time)
        elif ev.kind in ("JobCompleted", "JobRequeued"):
            start_ev, start = open_.pop(p["jobId"])
            sp = start_ev.payload
            out.append(ClaimInterval(p["jobId"], sp["slotId"], start, ev.time, sp["cpus"],
                                     tuple(sp["gpuUuids"])))
    for job_id, (start_ev, start) in open_.items():
        sp = start_ev.payload
        out.append(ClaimInterval(job_id, sp["slotId"], start, max(start, end_time), sp["cpus"],
                                 tuple(sp["gpuUuids"])))
    return out


def slot_intervals(events: Iterable[Event], end_time: int) -> List[SlotInterval]:
    reg: Dict[str, Event] = {}
    ends: Dict[str, int] = {}
    for ev in events:
        if ev.kind == "SlotRegistered":
            reg[ev.payload["slotId"]] = ev
        elif ev.kind in ("SlotRetired", "PilotWalltimeExpired"):
            ends[ev.payload["slotId"]] = ev.time
    out = []
    for slot_id, ev in reg.items():
        p = ev.payload
        end = ends.get(slot_id)
        out.append(SlotInterval(slot_id, p["pilotId"], ev.time,
                                end if end is not None else max(ev.time, end_time),
                                p["cpus"], tuple(p["gpuUuids"]), end is not None))
    return out


def _sweep(points: List[Tuple[int, int]]) -> Tuple[int, int]:
    """(peak level, integral) of a step function given (time, delta) points.

    Releases at a timestamp are applied before acquisitions at the same one.
    """
    level = peak = area = 0
    last_t: Optional[int] = None
    for t, delta in sorted(points, key=lambda x: (x[0], x[1])):
        if last_t is not None:
            area += level * (t - last_t)
        level += delta
        peak = max(peak, level)
        last_t = t
    return peak, area


def compute_metrics(events: Iterable[Event], config: Optional[ScenarioConfig] = None,
                    end_time: Optional[int] = None) -> Metrics:
    events = list(events)
    if end_time is None:
        if config is not None:
            end_time = config.duration_secs
        else:
            end_time = events[-1].time if events else 0

    arrivals: Dict[str, int] = {}
    first_start: Dict[str, int] = {}
    started_on_slot: Dict[str, int] = {}
    completed = 0
    for ev in events:
        p = ev.payload
        if ev.kind == "JobArrival":
            arrivals.setdefault(p["jobId"], ev.time)
        elif ev.kind == "JobStarted":
            first_start.setdefault(p["jobId"], ev.time)
            started_on_slot[p["slotId"]] = started_on_slot.get(p["slotId"], 0) + 1
        elif ev.kind == "JobCompleted":
            completed += 1

    waits = [first_start[j] - arrivals[j] for j in first_start if j in arrivals]
    claims = claim_intervals(events, end_time)
    slots = slot_intervals(events, end_time)

    gpu_points: List[Tuple[int, int]] = []
    cpu_claim_points: List[Tuple[int, int]] = []
    for c in claims:
        if c.gpu_uuids:
            gpu_points += [(c.start, len(c.gpu_uuids)), (c.end, -len(c.gpu_uuids))]
        cpu_claim_points += [(c.start, c.cpus), (c.end, -c.cpus)]
    peak_gpus, claimed_gpu_secs = _sweep(gpu_points)
    _, claimed_cpu_secs = _sweep(cpu_claim_points)

    slot_gpu_points: List[Tuple[int, int]] = []
    slot_cpu_points: List[Tuple[int, int]] = []
    for s in slots:
        slot_gpu_points += [(s.start, len(s.gpu_uuids)), (s.end, -len(s.gpu_uuids))]
        slot_cpu_points += [(s.start, s.cpus), (s.end, -s.cpus)]
    _, registered_gpu_secs = _sweep(slot_gpu_points)
    _, registered_cpu_secs = _sweep(slot_cpu_points)

    wasted = sum(s.end - s.start for s in slots if s.ended and not started_on_slot.get(s.slot_id))
    unique = {u for c in claims for u in c.gpu_uuids}

    return Metrics(
        jobsCompleted=completed,
        meanJobWaitSecs=(sum(waits) / len(waits)) if waits else 0.0,
        peakConcurrentGpusInUse=peak_gpus,
        uniqueGpusUsed=len(unique),
        gpuIdleSecs=registered_gpu_secs - claimed_gpu_secs,
        pilotWastedWalltimeSecs=wasted,
        cpuUtilization=(claimed_cpu_secs / registered_cpu_secs) if registered_cpu_secs else 0.0,
    )
