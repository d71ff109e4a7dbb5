"""Second matchmaking stage: idle jobs against registered slots."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Dict, List, MutableMapping, Optional, Sequence, Tuple

from .adlang import (
    JOB, AttrRef, ClassAd, Compare, Expression, Literal, Member, Or, Paren, conjoin,
    symmetric_match,
)
from .model import GpuUseClass, JobAd, classify_gpu_use
from .sitesim import SlotState, carve, gpus_to_assign, plan_claim


@dataclass
class MatchResult:
    pairs: List[Tuple[str, str, Tuple[str, ...]]] = field(default_factory=list)
    unmatched_job_ids: List[str] = field(default_factory=list)

    @property
    def matched_job_ids(self) -> List[str]:
        return [p[0] for p in self.pairs]


def gpu_clauses(job: JobAd) -> List[Expression]:
    out: List[Expression] = []
    if job.cuda_capability is not None:
        out.append(Compare(">=", AttrRef("CUDACapability", "Machine"), Literal(job.cuda_capability)))
    if job.cuda_runtime is not None:
        out.append(Member(AttrRef("CUDARuntime", "Job"), AttrRef("CMS_CUDA_SUPPORTED_RUNTIMES", "Machine")))
    if job.gpu_memory_mb is not None:
        out.append(Compare(">=", AttrRef("CUDAGlobalMemoryMB", "Machine"), Literal(job.gpu_memory_mb)))
    return out


def job_requirements(job: JobAd) -> Expression:
    clauses: List[Expression] = [
        Member(AttrRef("Arch", "Machine"), Literal(",".join(job.arch_list))),
    ]
    if job.request_gpus > 0:
        gpu = gpu_clauses(job)
        if gpu and classify_gpu_use(job) is GpuUseClass.CAN_USE_GPU:
            # optional GPU use: the device constraints only bind on GPU slots
            no_gpu = Compare("==", AttrRef("GPUs", "Machine"), Literal(0))
            clauses.append(Paren(Or(no_gpu, Paren(conjoin(*gpu)))))
        else:
            clauses.extend(gpu)
    if job.extra_requirements is not None:
        clauses.append(job.extra_requirements)
    return conjoin(*clauses)


@functools.lru_cache(maxsize=8192)
def build_job_ad(job: JobAd) -> ClassAd:
    attrs = {
        "JobId": job.id,
        "RequestCpus": job.request_cpus,
        "RequestMemory": job.request_memory_mb,
        "RequestGPUs": job.request_gpus,
        "RequiresGPU": job.requires_gpu,
    }
    if job.cuda_capability is not None:
        attrs["CUDACapability"] = job.cuda_capability
    if job.cuda_runtime is not None:
        attrs["CUDARuntime"] = job.cuda_runtime
    if job.gpu_memory_mb is not None:
        attrs["GPUMemoryMB"] = job.gpu_memory_mb
    attrs["Requirements"] = job_requirements(job)
    return ClassAd(attrs, kind=JOB)


def job_order_key(job: JobAd):
    return (-job.priority, job.submit_time, job.id)


def _rank(job: JobAd, free_gpus: int, free_cpus: int, slot_id: str) -> tuple:
    if job.request_gpus > 0:
        # negative for optional GPU jobs on short slots, so those are preferred
        return (free_gpus - job.request_gpus, free_cpus, slot_id)
    # CPU work stays off GPU slots while anything else fits
    return (0 if free_gpus == 0 else 1, free_cpus, slot_id)


def rank_key(job: JobAd, slot: SlotState) -> tuple:
    """Smaller is better."""
    return _rank(job, len(slot.free_gpu_uuids), slot.free_cpus, slot.slot_id)


def matches(job: JobAd, slot: SlotState,
            cache: Optional[MutableMapping[tuple, bool]] = None) -> bool:
    if cache is None:
        return symmetric_match(build_job_ad(job), slot.ad)
    key = (job, slot.slot_id, slot.ad)
    hit = cache.get(key)
    if hit is None:
        hit = cache[key] = symmetric_match(build_job_ad(job), slot.ad)
    return hit


SEARCH_BUDGET = 20_000


def _static_fit(job: JobAd, slot: SlotState, clock: int, cache) -> bool:
    """The parts of admission that do not depend on free amounts."""
    if slot.walltime_end - clock < job.max_wall_time_secs:
        return False
    if job.request_cpus > slot.total_cpus or job.request_memory_mb > slot.total_memory_mb:
        return False
    if gpus_to_assign(job, len(slot.gpu_uuids)) is None:
        return False
    return matches(job, slot, cache)


def _shape(job: JobAd) -> tuple:
    return (job.request_cpus, job.request_memory_mb, job.request_gpus, classify_gpu_use(job))


def _repack(jobs: List[JobAd], cands: Dict[str, List[SlotState]], budget: int) -> Optional[List[str]]:
    """Slot ids placing every job of ``jobs`` (in order) at once, or None.

    Depth-first over slots in rank order. Interchangeable slots are tried
    once per level and identical consecutive jobs take slots in
    non-decreasing order. Gives up (None) after ``budget`` nodes.
    """
    slot_ids = sorted({s.slot_id for js in cands.values() for s in js})
    index = {sid: i for i, sid in enumerate(slot_ids)}
    state: Dict[str, List[int]] = {}
    for js in cands.values():
        for sl in js:
            state[sl.slot_id] = [sl.free_cpus, sl.free_memory_mb, len(sl.free_gpu_uuids)]
    sig = {sid: frozenset(j.id for j in jobs if any(x.slot_id == sid for x in cands[j.id]))
           for sid in slot_ids}
    # suffix demand bounds (GPUs counted only where mandatory)
    n = len(jobs)
    need = [[0, 0, 0] for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        j = jobs[i]
        must = j.request_gpus if classify_gpu_use(j) is GpuUseClass.MUST_USE_GPU else 0
        need[i] = [need[i + 1][0] + j.request_cpus, need[i + 1][1] + j.request_memory_mb,
                   need[i + 1][2] + must]
    chosen: List[str] = []
    nodes = 0

    def dfs(i: int) -> bool:
        nonlocal nodes
        if i == n:
            return True
        nodes += 1
        if nodes > budget:
            raise _Exhausted
        if any(sum(v[k] for v in state.values()) < need[i][k] for k in range(3)):
            return False
        job = jobs[i]
        floor = -1
        if i and _shape(jobs[i - 1]) == _shape(job) and cands[jobs[i - 1].id] == cands[job.id]:
            floor = index[chosen[-1]]
        options = []
        for sl in cands[job.id]:
            cpus, mem, gpus = state[sl.slot_id]
            if index[sl.slot_id] < floor or job.request_cpus > cpus or job.request_memory_mb > mem:
                continue
            take = gpus_to_assign(job, gpus)
            if take is None:
                continue
            options.append((_rank(job, gpus, cpus, sl.slot_id), sl.slot_id, take))
        options.sort()
        seen = set()
        for _, sid, take in options:
            key = (tuple(state[sid]), sig[sid])
            if key in seen:
                continue
            seen.add(key)
            v = state[sid]
            v[0] -= job.request_cpus
            v[1] -= job.request_memory_mb
            v[2] -= take
            chosen.append(sid)
            if dfs(i + 1):
                return True
            chosen.pop()
            v[0] += job.request_cpus
            v[1] += job.request_memory_mb
            v[2] += take
        return False

    try:
        return list(chosen) if dfs(0) else None
    except _Exhausted:
        return None


class _Exhausted(Exception):
    pass


def negotiate(idle_jobs: Sequence[JobAd], slots: Sequence[SlotState], clock: int,
              cache: Optional[MutableMapping[tuple, bool]] = None,
              search_budget: int = SEARCH_BUDGET) -> MatchResult:
    """Priority-order matching over snapshots of ``slots``.

    Each job, highest priority first, goes to its best-ranked candidate
    slot that still has room. If none has room, the jobs matched so far
    are re-placed (bounded search) to make space, so a job is matched
    exactly when it fits together with every higher-priority matched job.
    The input slots are left untouched; the engine replays the returned
    pairs with :func:`carve`.
    """
    base = {s.slot_id: s for s in slots if not s.retiring}
    work: Dict[str, SlotState] = {sid: s.snapshot() for sid, s in base.items()}
    placed: List[Tuple[JobAd, str]] = []
    cands: Dict[str, List[SlotState]] = {}
    unmatched: List[str] = []
    hopeless = set()  # (shape, candidates) whose repack failed; the placement has not changed since
    for job in sorted(idle_jobs, key=job_order_key):
        cands[job.id] = [s for s in base.values() if _static_fit(job, s, clock, cache)]
        best = None
        best_key = None
        for sl in cands[job.id]:
            slot = work[sl.slot_id]
            if plan_claim(slot, job, clock) is None:
                continue
            k = rank_key(job, slot)
            if best_key is None or k < best_key:
                best, best_key = slot, k
        if best is not None:
            carve(best, job, clock)
            placed.append((job, best.slot_id))
            continue
        attempt = (_shape(job), tuple(sl.slot_id for sl in cands[job.id]))
        if cands[job.id] and search_budget > 0 and attempt not in hopeless:
            jobs = [j for j, _ in placed] + [job]
            layout = _repack(jobs, {j.id: cands[j.id] for j in jobs}, search_budget)
            if layout is not None:
                work = {sid: s.snapshot() for sid, s in base.items()}
                for j, sid in zip(jobs, layout):
                    carve(work[sid], j, clock)
                placed = list(zip(jobs, layout))
                hopeless.clear()
                continue
            hopeless.add(attempt)
        unmatched.append(job.id)

    result = MatchResult(unmatched_job_ids=unmatched)
    final = {sid: s.snapshot() for sid, s in base.items()}
    for job, sid in placed:
        claim = carve(final[sid], job, clock)
        result.pairs.append((job.id, sid, claim.gpu_uuids))
    return result
