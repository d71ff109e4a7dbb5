"""Deterministic discrete-event loop wiring both matchmaking stages.

Events at the same timestamp run in a fixed phase order: job arrivals,
frontend cycle, CE grants, slot lifecycle ticks, negotiation, job
completions, pilot walltime expiry. Within a phase, insertion order wins.
"""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Dict, List, Optional, Tuple

from ..frontend import EntryLedger, fe_cycle
from ..model import FactoryEntry, JobAd, NodeSpec, classify_gpu_use
from ..negotiator import negotiate
from ..sitesim import (
    Pilot, PilotState, SlotState, carve, cancel_pilot, ce_tick, register_slot, release,
    slot_tick,
)
from .config import ScenarioConfig, expand_workload
from .events import EventLog


PH_ARRIVAL, PH_FE, PH_CE, PH_SLOT, PH_NEGOTIATE, PH_COMPLETE, PH_WALLTIME = range(7)



def _gpu_model(node: NodeSpec) -> Optional[Dict[str, Any]]:
    if not node.gpus:
        return None
    g = node.gpus[0]
    return {
        "deviceName": g.device_name,
        "cudaCapability": g.cuda_capability,
        "globalMemoryMB": g.global_memory_mb,
        "driverVersion": g.driver_version,
        "supportedRuntimes": list(g.supported_runtimes),
    }


class Simulation:
    def __init__(self, config: ScenarioConfig, until: Optional[int] = None):
        self.config = config
        self.end_time = config.duration_secs if until is None else until
        self.log = EventLog()
        self.entries: Dict[str, FactoryEntry] = {e.name: e for e in config.entries}
        self.policies = config.policies
        self.site_nodes: Dict[str, List[NodeSpec]] = {
            s.policy.site_name: list(s.nodes) for s in config.sites}
        self.busy_nodes: Dict[str, str] = {}  # node id -> pilot id
        self.jobs: Dict[str, JobAd] = {}
        self.idle: Dict[str, JobAd] = {}
        self.running: Dict[str, Tuple[str, int]] = {}  # job id -> (slot id, start time)
        self.pilots: Dict[str, Pilot] = {}
        self.live_pilots: Dict[str, Pilot] = {}
        self.slots: Dict[str, SlotState] = {}
        self.slot_nodes: Dict[str, NodeSpec] = {}
        self._heap: list = []
        self._tick = itertools.count()
        self._pilot_ids = itertools.count(1)
        self._match_cache: Dict[tuple, bool] = {}

    # -- scheduling ----------------------------------------------------

    def _at(self, time: int, phase: int, handler, *args) -> None:
        if time <= self.end_time:
            heapq.heappush(self._heap, (time, phase, next(self._tick), handler, args))

    def _emit(self, time: int, kind: str, payload: Dict[str, Any]) -> None:
        self.log.append(time, kind, payload)

    def run(self) -> EventLog:
        for job in expand_workload(self.config):
            self._at(job.submit_time, PH_ARRIVAL, self._arrive, job)
        self._at(0, PH_FE, self._fe_cycle)
        for site in self.config.sites:
            self._at(0, PH_CE, self._ce_tick, site.policy.site_name)
        self._at(0, PH_NEGOTIATE, self._negotiate)
        while self._heap:
            time, _phase, _tick, handler, args = heapq.heappop(self._heap)
            handler(time, *args)
        return self.log

    # -- handlers ------------------------------------------------------

    def _arrive(self, t: int, job: JobAd) -> None:
        self.jobs[job.id] = job
        self.idle[job.id] = job
        self._emit(t, "JobArrival", {
            "jobId": job.id,
            "useClass": classify_gpu_use(job).value,
            "requestCpus": job.request_cpus,
            "requestGPUs": job.request_gpus,
            "archList": list(job.arch_list),
        })

    def _ledger(self) -> Dict[str, EntryLedger]:
        ledger = {name: EntryLedger() for name in self.entries}
        for pilot in self.live_pilots.values():
            book = ledger[pilot.entry_name]
            if pilot.state is PilotState.QUEUED_AT_CE:
                book.queued_pilot_ids.append(pilot.id)
                continue
            slot = self.slots.get(f"slot@{pilot.id}")
            if slot is not None and slot.claims:
                book.running_claimed_count += 1
            else:
                book.running_unclaimed_count += 1
        return ledger

    def _fe_cycle(self, t: int) -> None:
        actions = fe_cycle(list(self.idle.values()), self.config.entries, self._ledger(), self.policies)
        self._emit(t, "FECycle", {"idleJobs": len(self.idle), **actions.to_dict()})
        for pid in actions.cancellations:
            pilot = self.live_pilots.pop(pid)
            cancel_pilot(pilot, t)
            self._emit(t, "PilotCancelled", {"pilotId": pid, "entry": pilot.entry_name,
                                             "site": pilot.site_name})
        for name, count in actions.submissions.items():
            entry = self.entries[name]
            for _ in range(count):
                pilot = Pilot(id=f"p{next(self._pilot_ids):05d}", entry_name=name,
                              site_name=entry.cms_site, submit_time=t)
                self.pilots[pilot.id] = pilot
                self.live_pilots[pilot.id] = pilot
                self._emit(t, "PilotSubmitted", {"pilotId": pilot.id, "entry": name,
                                                 "site": entry.cms_site,
                                                 "gpuEntry": entry.is_gpu_entry})
        self._at(t + self.config.fe_period_secs, PH_FE, self._fe_cycle)

    def _ce_tick(self, t: int, site: str) -> None:
        queue = [p for p in self.live_pilots.values()
                 if p.site_name == site and p.state is PilotState.QUEUED_AT_CE]
        if queue:
            free = [n for n in self.site_nodes[site] if n.node_id not in self.busy_nodes]
            for pilot, node in ce_tick(queue, free, t, self.entries):
                self._start_pilot(t, pilot, node)
        self._at(t + self.policies[site].ce_grant_period_secs, PH_CE, self._ce_tick, site)

    def _start_pilot(self, t: int, pilot: Pilot, node: NodeSpec) -> None:
        entry = self.entries[pilot.entry_name]
        policy = self.policies[entry.cms_site]
        self.busy_nodes[node.node_id] = pilot.id
        self._emit(t, "PilotGranted", {"pilotId": pilot.id, "entry": entry.name,
                                       "site": entry.cms_site, "nodeId": node.node_id})
        slot = register_slot(pilot, node, entry, policy, t)
        self.slots[slot.slot_id] = slot
        self.slot_nodes[slot.slot_id] = node
        self._emit(t, "SlotRegistered", {
            "slotId": slot.slot_id,
            "pilotId": pilot.id,
            "entry": entry.name,
            "site": entry.cms_site,
            "nodeId": node.node_id,
            "arch": node.arch,
            "cpus": slot.total_cpus,
            "memoryMB": slot.total_memory_mb,
            "gpuUuids": list(slot.gpu_uuids),
            "gpuModel": _gpu_model(node),
            "gpuHoldActive": slot.gpu_hold_active,
            "holdWindowSecs": slot.hold_window_secs,
            "walltimeLimitSecs": slot.walltime_limit_secs,
        })
        if slot.is_gpu_slot:
            self._at(slot.hold_end, PH_SLOT, self._slot_tick, slot.slot_id)
        self._at(slot.walltime_end, PH_WALLTIME, self._slot_tick, slot.slot_id)

    def _slot_tick(self, t: int, slot_id: str) -> None:
        slot = self.slots.get(slot_id)
        if slot is None:
            return
        pilot = self.pilots[slot.pilot_id]
        outcome = slot_tick(slot, pilot, self.policies[slot.site_name], t)
        for claim in outcome.killed:
            self.running.pop(claim.job_id, None)
            self.idle[claim.job_id] = self.jobs[claim.job_id]
            self._emit(t, "JobRequeued", {
                "jobId": claim.job_id, "slotId": slot_id, "reason": "PilotWalltimeExpired",
                **self._claim_fields(claim), **self._free_fields(slot)})
        for kind, payload in outcome.events:
            self._emit(t, kind, payload)
        if outcome.ended:
            self._end_slot(slot)

    def _end_slot(self, slot: SlotState) -> None:
        del self.slots[slot.slot_id]
        node = self.slot_nodes.pop(slot.slot_id)
        del self.busy_nodes[node.node_id]
        self.live_pilots.pop(slot.pilot_id, None)

    @staticmethod
    def _claim_fields(claim) -> Dict[str, Any]:
        return {"cpus": claim.cpus, "memoryMB": claim.memory_mb, "gpuUuids": list(claim.gpu_uuids)}

    @staticmethod
    def _free_fields(slot: SlotState) -> Dict[str, Any]:
        return {"freeCpus": slot.free_cpus, "freeMemoryMB": slot.free_memory_mb,
                "freeGpus": len(slot.free_gpu_uuids)}

    def _negotiate(self, t: int) -> None:
        idle = list(self.idle.values())
        slots = list(self.slots.values())
        result = negotiate(idle, slots, t, self._match_cache) if idle and slots else None
        matched = len(result.pairs) if result else 0
        self._emit(t, "NegotiationCycle", {"idleJobs": len(idle), "slots": len(slots),
                                           "matched": matched})
        if result:
            for job_id, slot_id, gpu_uuids in result.pairs:
                job = self.jobs[job_id]
                slot = self.slots[slot_id]
                claim = carve(slot, job, t)
                if claim is None or claim.gpu_uuids != gpu_uuids:
                    raise RuntimeError(f"negotiated pair ({job_id}, {slot_id}) no longer fits")
                del self.idle[job_id]
                self.running[job_id] = (slot_id, t)
                self._emit(t, "JobStarted", {
                    "jobId": job_id,
                    "slotId": slot_id,
                    "pilotId": slot.pilot_id,
                    "site": slot.site_name,
                    "arch": slot.arch,
                    "useClass": claim.use_class.value,
                    "requestGPUs": job.request_gpus,
                    **self._claim_fields(claim),
                    "endTime": claim.end_time,
                    "gpuSlot": slot.is_gpu_slot,
                    "slotStartTime": slot.start_time,
                    **self._free_fields(slot),
                })
                self._at(claim.end_time, PH_COMPLETE, self._complete, job_id, slot_id, t)
        if len(self._match_cache) > 200_000:
            self._match_cache.clear()
        self._at(t + self.config.negotiator_period_secs, PH_NEGOTIATE, self._negotiate)

    def _complete(self, t: int, job_id: str, slot_id: str, started: int) -> None:
        if self.running.get(job_id) != (slot_id, started):
            return  # killed and requeued meanwhile
        del self.running[job_id]
        slot = self.slots[slot_id]
        claim = release(slot, job_id)
        self._emit(t, "JobCompleted", {"jobId": job_id, "slotId": slot_id,
                                       **self._claim_fields(claim), **self._free_fields(slot)})
        if self.pilots[slot.pilot_id].state is PilotState.RETIRING and not slot.claims:
            self._slot_tick(t, slot_id)


def run_events(config: ScenarioConfig, until: Optional[int] = None) -> EventLog:
    return Simulation(config, until).run()
