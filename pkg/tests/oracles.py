"""Independent reference implementations used as test oracles."""

import itertools
import random

from glidepool.model import FactoryEntry, GpuDevice, JobAd, NodeSpec, SitePolicy, SubmitAttrs

from conftest import make_slot

MODELS = [
    dict(device_name="NVIDIA A100-PCIE-40GB", cuda_capability=8.0, global_memory_mb=40536,
         supported_runtimes=("10.1", "10.2", "11.0", "11.1", "11.4")),
    dict(device_name="Tesla V100-PCIE-32GB", cuda_capability=7.0, global_memory_mb=32510,
         supported_runtimes=("10.1", "10.2", "11.0")),
    dict(device_name="Tesla T4", cuda_capability=7.5, global_memory_mb=15110,
         supported_runtimes=("11.0", "11.4")),
]


def random_instance(rng: random.Random, max_jobs=6, max_slots=4, clock=5000):
    """Jobs, slots and the node behind each slot, for a single negotiation cycle."""
    slots, nodes = [], {}
    for i in range(rng.randint(1, max_slots)):
        ngpu = rng.choice([0, 0, 1, 2])
        arch = rng.choice(["x86_64", "x86_64", "aarch64", "ppc64le"])
        cpus = rng.choice([4, 8, 8])
        model = rng.choice(MODELS)
        gpus = tuple(GpuDevice(uuid=f"GPU-{i}-{k}", driver_version="11.4", max_supported_version=11040, **model)
                     for k in range(ngpu))
        node = NodeSpec(f"n{i}", "S", cpus, cpus * 4000, arch, gpus)
        entry = FactoryEntry(name=f"e{i}", gatekeeper="g", cms_site="S",
                             submit_attrs=SubmitAttrs(cpus * 2000, cpus, ngpu), glidein_cpus=cpus,
                             glidein_max_mem_mbs=cpus * 2000, glidein_max_walltime_secs=rng.choice([8000, 20000]),
                             resource_slots=("GPUs", max(ngpu, 1), "main") if ngpu else None, arch=arch)
        hold = rng.choice([0, 1800, 100000])
        start = rng.choice([0, 0, 2000])
        slot, _ = make_slot(f"p{i}", node, entry, SitePolicy("S", hold_window_secs=hold), start)
        if slot.hold_end <= clock and slot.gpu_hold_active:
            slot.gpu_hold_active = False
            slot.parent_ad = slot.parent_ad.updated(GpuHoldActive=False)
        slots.append(slot)
        nodes[slot.slot_id] = node
    jobs = []
    for k in range(rng.randint(1, max_jobs)):
        kind = rng.choice(["must", "can", "cpu"])
        cpus = rng.choice([1, 2, 4, 8])
        gpus = 0 if kind == "cpu" else rng.choice([1, 1, 2])
        extra = {}
        if gpus and rng.random() < 0.5:
            extra["cuda_capability"] = rng.choice([6.0, 7.5, 8.0])
        if gpus and rng.random() < 0.3:
            extra["cuda_runtime"] = rng.choice(["11.0", "11.4"])
        if gpus and rng.random() < 0.3:
            extra["gpu_memory_mb"] = rng.choice([8000, 20000])
        jobs.append(JobAd(
            id=f"j{k}", request_cpus=cpus, request_memory_mb=2000 * cpus, request_gpus=gpus,
            requires_gpu=1 if kind == "must" else 0,
            arch_list=tuple(rng.sample(["x86_64", "aarch64", "ppc64le"], rng.randint(1, 2))),
            max_wall_time_secs=rng.choice([3600, 7200]), run_time_secs=1000,
            submit_time=rng.randint(0, 3), priority=rng.randint(0, 2), **extra))
    return jobs, slots, nodes


def _device_ok(job, node):
    if not node.gpus:
        return False
    g = node.gpus[0]
    if job.cuda_capability is not None and g.cuda_capability < job.cuda_capability:
        return False
    if job.cuda_runtime is not None and job.cuda_runtime not in g.supported_runtimes:
        return False
    if job.gpu_memory_mb is not None and g.global_memory_mb < job.gpu_memory_mb:
        return False
    return True


def compatible(job, slot, node, clock):
    """Static compatibility worked out from the raw records, without any ads."""
    if node.arch not in job.arch_list:
        return False
    if slot.start_time + slot.walltime_limit_secs - clock < job.max_wall_time_secs:
        return False
    has_gpus = bool(node.gpus)
    if job.request_gpus == 0:
        return not (has_gpus and slot.gpu_hold_active)
    if job.requires_gpu:
        return _device_ok(job, node)
    return (not has_gpus) or _device_ok(job, node)


def gpu_take(job, free):
    if job.request_gpus == 0:
        return 0
    if job.requires_gpu:
        return job.request_gpus if free >= job.request_gpus else None
    return min(job.request_gpus, free)


def priority_order(jobs):
    return sorted(jobs, key=lambda j: (-j.priority, j.submit_time, j.id))


def brute_force_matched(jobs, slots, nodes, clock):
    """Matched job ids under exhaustive priority-order search.

    Enumerates every assignment of jobs to slots (or to nothing), keeps the
    feasible ones and picks the best in priority order: a higher-priority
    job being matched outweighs any number of lower-priority ones.
    """
    order = priority_order(jobs)
    best = None
    for assign in itertools.product(range(-1, len(slots)), repeat=len(order)):
        free = [[s.free_cpus, s.free_memory_mb, len(s.free_gpu_uuids)] for s in slots]
        ok = True
        for job, a in zip(order, assign):
            if a < 0:
                continue
            s, f = slots[a], free[a]
            if not compatible(job, s, nodes[s.slot_id], clock):
                ok = False
                break
            take = gpu_take(job, f[2])
            if take is None or job.request_cpus > f[0] or job.request_memory_mb > f[1]:
                ok = False
                break
            f[0] -= job.request_cpus
            f[1] -= job.request_memory_mb
            f[2] -= take
        if ok:
            key = tuple(a >= 0 for a in assign)
            if best is None or key > best:
                best = key
    return {j.id for j, hit in zip(order, best) if hit}
