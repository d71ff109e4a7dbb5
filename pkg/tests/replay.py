"""Event-log replays that re-derive state independently of the engine."""

from collections import defaultdict

PILOT_STATE_OF = {
    "PilotSubmitted": "QueuedAtCE",
    "PilotGranted": "Starting",
    "SlotRegistered": "Registered",
    "PilotCancelled": "Cancelled",
    "SlotRetired": "Retired",
    "PilotWalltimeExpired": "WalltimeExpired",
}


def pilot_paths(events):
    paths = defaultdict(list)
    for ev in events:
        p = ev.payload
        if ev.kind == "HoldWindowExpired" and p["action"] == "retire":
            paths[p["pilotId"]].append("Retiring")
        elif ev.kind in PILOT_STATE_OF:
            paths[p["pilotId"]].append(PILOT_STATE_OF[ev.kind])
    return dict(paths)


def conservation_violations(events):
    """Replays every claim against its slot; returns a list of problems."""
    total, free, held = {}, {}, {}
    claims = {}
    problems = []
    for ev in events:
        p = ev.payload
        if ev.kind == "SlotRegistered":
            total[p["slotId"]] = (p["cpus"], p["memoryMB"], len(p["gpuUuids"]))
            free[p["slotId"]] = [p["cpus"], p["memoryMB"], set(p["gpuUuids"])]
            held[p["slotId"]] = set()
            continue
        if ev.kind == "JobStarted":
            sid = p["slotId"]
            f = free[sid]
            uu = set(p["gpuUuids"])
            if not uu <= f[2]:
                problems.append(f"seq {ev.seq}: {p['jobId']} takes GPUs that are not free")
            f[0] -= p["cpus"]
            f[1] -= p["memoryMB"]
            f[2] -= uu
            held[sid] |= uu
            claims[p["jobId"]] = (sid, p["cpus"], p["memoryMB"], uu)
        elif ev.kind in ("JobCompleted", "JobRequeued"):
            sid, cpus, mem, uu = claims.pop(p["jobId"])
            if sid != p["slotId"]:
                problems.append(f"seq {ev.seq}: {p['jobId']} ends on {p['slotId']} but ran on {sid}")
            f = free[sid]
            f[0] += cpus
            f[1] += mem
            f[2] |= uu
            held[sid] -= uu
        else:
            continue
        sid = p["slotId"]
        f = free[sid]
        claimed = [(c, m, len(u)) for s, c, m, u in claims.values() if s == sid]
        sums = (f[0] + sum(c for c, _, _ in claimed), f[1] + sum(m for _, m, _ in claimed),
                len(f[2]) + sum(g for _, _, g in claimed))
        if sums != total[sid]:
            problems.append(f"seq {ev.seq}: {sid} free+claimed {sums} != totals {total[sid]}")
        if min(f[0], f[1]) < 0:
            problems.append(f"seq {ev.seq}: {sid} overcommitted")
        if (p["freeCpus"], p["freeMemoryMB"], p["freeGpus"]) != (f[0], f[1], len(f[2])):
            problems.append(f"seq {ev.seq}: {sid} logged free amounts disagree with replay")
    return problems


def cpu_utilization_direct(events, end_time):
    """Claimed over registered CPU-seconds, summed interval by interval."""
    reg_start, reg_cpus, reg_end = {}, {}, {}
    start = {}
    claimed = 0
    for ev in events:
        p = ev.payload
        if ev.kind == "SlotRegistered":
            reg_start[p["slotId"]] = ev.time
            reg_cpus[p["slotId"]] = p["cpus"]
        elif ev.kind in ("SlotRetired", "PilotWalltimeExpired"):
            reg_end[p["slotId"]] = ev.time
        elif ev.kind == "JobStarted":
            start[p["jobId"]] = (ev.time, p["cpus"])
        elif ev.kind in ("JobCompleted", "JobRequeued"):
            t0, cpus = start.pop(p["jobId"])
            claimed += cpus * (ev.time - t0)
    for t0, cpus in start.values():
        claimed += cpus * (end_time - t0)
    registered = sum(reg_cpus[s] * (reg_end.get(s, end_time) - reg_start[s]) for s in reg_start)
    return claimed / registered if registered else 0.0
