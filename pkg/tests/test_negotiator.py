import random

import pytest

from glidepool.adlang import parse_expression, symmetric_match, to_source
from glidepool.model import SitePolicy
from glidepool.negotiator import build_job_ad, job_requirements, negotiate
from glidepool.sitesim import carve, plan_claim

from conftest import can, cpu_entry, cpu_node, gpu_node, job, make_slot, must
from oracles import brute_force_matched, compatible, random_instance

OPEN = SitePolicy("T2_US_Wisconsin", hold_window_secs=0)


def test_requirements_for_cuda_job():
    j = must(cuda_capability=3.0, cuda_runtime="11.4", gpu_memory_mb=8000)
    got = job_requirements(j)
    want = parse_expression('Machine.Arch in "x86_64" && Machine.CUDACapability >= 3.0'
                            ' && Job.CUDARuntime in Machine.CMS_CUDA_SUPPORTED_RUNTIMES'
                            ' && Machine.CUDAGlobalMemoryMB >= 8000')
    assert got == want
    ad = build_job_ad(j)
    assert ad.lookup("RequestGPUs") is not None and ad.lookup("RequiresGPU") is not None


def test_requirements_cpu_only():
    assert to_source(job_requirements(job())) == 'Machine.Arch in "x86_64"'


def test_requirements_multi_arch():
    assert to_source(job_requirements(job(arch=("x86_64", "aarch64")))) == 'Machine.Arch in "x86_64,aarch64"'


def test_extra_requirements_appended():
    j = job(extra_requirements=parse_expression('GLIDEIN_CMSSite == "T2_CH_CERN"'))
    assert to_source(job_requirements(j)).endswith('&& GLIDEIN_CMSSite == "T2_CH_CERN"')


def test_must_use_goes_to_gpu_slot(wisconsin):
    gslot, _ = make_slot("p1", gpu_node(), wisconsin)
    cslot, _ = make_slot("p2", cpu_node(site="T2_US_Wisconsin"), cpu_entry(site="T2_US_Wisconsin"))
    res = negotiate([must()], [cslot, gslot], 0)
    assert [(j, s) for j, s, _ in res.pairs] == [("m", gslot.slot_id)]


def test_cpu_job_blocked_by_hold(wisconsin):
    gslot, _ = make_slot("p1", gpu_node(), wisconsin)
    res = negotiate([job()], [gslot], 0)
    assert res.pairs == [] and res.unmatched_job_ids == ["j"]


def test_best_fit_gpu_slot(wisconsin):
    one, _ = make_slot("p1", gpu_node("a", n=1), wisconsin)
    two, _ = make_slot("p2", gpu_node("b", n=2), wisconsin)
    res = negotiate([must()], [two, one], 0)
    assert res.pairs[0][1] == one.slot_id


def test_cpu_jobs_prefer_gpu_free_slots(wisconsin):
    gslot, _ = make_slot("p1", gpu_node(), wisconsin, OPEN)
    cslot, _ = make_slot("p2", cpu_node(site="T2_US_Wisconsin"), cpu_entry(site="T2_US_Wisconsin"))
    res = negotiate([job()], [gslot, cslot], 0)
    assert res.pairs[0][1] == cslot.slot_id


def test_can_use_gets_gpu_on_gpu_slot(wisconsin):
    gslot, _ = make_slot("p1", gpu_node(), wisconsin)
    res = negotiate([can()], [gslot], 0)
    assert len(res.pairs[0][2]) == 1


def test_claims_apply_within_cycle(wisconsin):
    gslot, _ = make_slot("p1", gpu_node(n=1), wisconsin)
    res = negotiate([must("a"), must("b")], [gslot], 0)
    assert res.matched_job_ids == ["a"] and res.unmatched_job_ids == ["b"]
    assert gslot.free_gpu_uuids == gslot.gpu_uuids  # inputs untouched


def test_priority_order(wisconsin):
    gslot, _ = make_slot("p1", gpu_node(n=1), wisconsin)
    jobs = [must("low", submit_time=0), must("high", priority=5, submit_time=9)]
    assert negotiate(jobs, [gslot], 10).matched_job_ids == ["high"]


def test_repack_makes_room_for_lower_priority_job():
    # best fit sends the first 2-cpu job to the 3-cpu slot, which would strand the 3-cpu job
    s3, _ = make_slot("p1", cpu_node("a", cpus=3), cpu_entry("e3", cpus=3))
    s4, _ = make_slot("p2", cpu_node("b", cpus=4), cpu_entry("e4", cpus=4))
    jobs = [job("a", cpus=2, priority=3), job("b", cpus=2, priority=2), job("c", cpus=3, priority=1)]
    res = negotiate(jobs, [s3, s4], 0)
    assert sorted(res.matched_job_ids) == ["a", "b", "c"]
    assert dict((j, s) for j, s, _ in res.pairs)["c"] == s3.slot_id


def test_retiring_slots_skipped(wisconsin):
    slot, _ = make_slot("p1", gpu_node(), wisconsin)
    slot.retiring = True
    assert negotiate([must()], [slot], 0).pairs == []


def test_determinism():
    rng = random.Random(7)
    for _ in range(50):
        jobs, slots, _ = random_instance(rng)
        a = negotiate(jobs, slots, 5000)
        b = negotiate(list(reversed(jobs)), list(reversed(slots)), 5000)
        assert repr(a) == repr(negotiate(jobs, slots, 5000))
        assert sorted(a.pairs) == sorted(b.pairs)


@pytest.mark.parametrize("seed", range(5))
def test_match_invariants(seed):
    rng = random.Random(1000 + seed)
    for _ in range(60):
        jobs, slots, nodes = random_instance(rng)
        res = negotiate(jobs, slots, 5000)
        by_id = {j.id: j for j in jobs}
        work = {s.slot_id: s.snapshot() for s in slots}
        assert len(set(res.matched_job_ids)) == len(res.matched_job_ids)
        assert set(res.matched_job_ids) | set(res.unmatched_job_ids) == set(by_id)
        for jid, sid, uuids in res.pairs:
            j = by_id[jid]
            # soundness: the ads agree and the resources are there
            assert symmetric_match(build_job_ad(j), work[sid].ad)
            claim = carve(work[sid], j, 5000)
            assert claim is not None and claim.gpu_uuids == uuids
            if j.request_gpus == 0:
                assert uuids == ()
            if j.requires_gpu:
                assert len(uuids) == j.request_gpus
        # greedy maximality: nothing left idle that still fits somewhere
        for jid in res.unmatched_job_ids:
            j = by_id[jid]
            for s in work.values():
                assert plan_claim(s, j, 5000) is None or not compatible(j, s, nodes[s.slot_id], 5000)


@pytest.mark.parametrize("seed", range(4))
def test_oracle_equivalence(seed):
    rng = random.Random(seed)
    for _ in range(50):
        jobs, slots, nodes = random_instance(rng)
        assert set(negotiate(jobs, slots, 5000).matched_job_ids) == brute_force_matched(jobs, slots, nodes, 5000)
