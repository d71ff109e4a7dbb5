"""First matchmaking stage: pilot pressure per factory entry.

The frontend looks at idle jobs and the static entry descriptions, decides
how many pilots each entry should get and which CE-queued pilots are no
longer wanted.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

from .model import FactoryEntry, GpuUseClass, JobAd, SitePolicy, classify_gpu_use, static_entry_compat


class ConfigurationError(ValueError):
    pass


@dataclass
class EntryLedger:
    queued_pilot_ids: List[str] = field(default_factory=list)
    running_unclaimed_count: int = 0
    running_claimed_count: int = 0


# entry name -> bookkeeping
PilotLedger = Dict[str, EntryLedger]


@dataclass
class FEActions:
    submissions: Dict[str, int] = field(default_factory=dict)
    cancellations: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"submissions": dict(self.submissions), "cancellations": list(self.cancellations)}


def matching_jobs(idle_jobs: Sequence[JobAd], entry: FactoryEntry) -> List[JobAd]:
    """Idle jobs that justify pilots at ``entry``.

    GPU entries are only ever provisioned on behalf of jobs that must use a
    GPU; jobs that merely can use one do not add GPU pressure.
    """
    out = [j for j in idle_jobs if static_entry_compat(j, entry)]
    if entry.is_gpu_entry:
        out = [j for j in out if classify_gpu_use(j) is GpuUseClass.MUST_USE_GPU]
    return out


def slots_per_pilot(entry: FactoryEntry, matching: Sequence[JobAd]) -> int:
    if entry.is_gpu_entry:
        typical = statistics.median_low([j.request_gpus for j in matching]) if matching else 1
        return max(1, entry.gpu_count // max(typical, 1))
    typical = statistics.median_low([j.request_cpus for j in matching]) if matching else 1
    return max(1, entry.glidein_cpus // max(typical, 1))


def pilots_needed(entry: FactoryEntry, matching: Sequence[JobAd]) -> int:
    if not matching:
        return 0
    return math.ceil(len(matching) / slots_per_pilot(entry, matching))


def fe_cycle(idle_jobs: Sequence[JobAd], entries: Sequence[FactoryEntry],
             ledger: Mapping[str, EntryLedger], policies: Mapping[str, SitePolicy]) -> FEActions:
    actions = FEActions()
    for entry in entries:
        policy = policies.get(entry.cms_site)
        if policy is None:
            raise ConfigurationError(f"entry {entry.name!r}: no policy for site {entry.cms_site!r}")
        book = ledger.get(entry.name) or EntryLedger()
        queued = len(book.queued_pilot_ids)
        matching = matching_jobs(idle_jobs, entry)
        if not matching:
            actions.cancellations.extend(book.queued_pilot_ids)
            continue
        want = pilots_needed(entry, matching) - queued - book.running_unclaimed_count
        room = policy.max_queued_pilots - queued
        n = max(0, min(want, room))
        if n > 0:
            actions.submissions[entry.name] = n
    return actions
