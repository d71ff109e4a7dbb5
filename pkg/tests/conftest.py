from pathlib import Path

import pytest

from glidepool.model import (
    FactoryEntry, GpuDevice, JobAd, NodeSpec, SitePolicy, SubmitAttrs, parse_factory_entry_xml,
)
from glidepool.sitesim import Pilot, PilotState, register_slot

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
WISCONSIN_XML = (SCENARIOS / "entries" / "wisconsin_gpu.xml").read_text()

A100_RUNTIMES = ("10.1", "10.2", "11.0", "11.1")


def a100(uuid, runtimes=A100_RUNTIMES):
    return GpuDevice(
        uuid=uuid, device_name="NVIDIA A100-PCIE-40GB", cuda_capability=8.0, global_memory_mb=40536,
        driver_version="11.3", max_supported_version=11030, supported_runtimes=tuple(runtimes),
        clock_mhz=1410.0, compute_units=108, cores_per_cu=64, ecc_enabled=True,
        nvidia_driver_version="515.48.07",
    )


def gpu_node(node_id="wisc-gpu00", n=2, site="T2_US_Wisconsin", arch="x86_64", runtimes=A100_RUNTIMES):
    return NodeSpec(node_id, site, 8, 32000, arch,
                    tuple(a100(f"GPU-{node_id}-{k}", runtimes) for k in range(n)))


def cpu_node(node_id="cpu00", site="T2_XX_Test", cpus=8, arch="x86_64"):
    return NodeSpec(node_id, site, cpus, cpus * 4000, arch)


def cpu_entry(name="CMS_T2_XX_Test_cpu", site="T2_XX_Test", cpus=8, arch="x86_64", walltime=216000):
    return FactoryEntry(name=name, gatekeeper=f"ce.{site}", cms_site=site,
                        submit_attrs=SubmitAttrs(max_memory=cpus * 2000, xcount=cpus),
                        glidein_cpus=cpus, glidein_max_mem_mbs=cpus * 2000 + 240,
                        glidein_max_walltime_secs=walltime, arch=arch)


def job(jid="j", cpus=1, gpus=0, requires=0, run=1000, wall=3600, arch=("x86_64",), **kw):
    kw.setdefault("request_memory_mb", 2000 * cpus)
    return JobAd(id=jid, request_cpus=cpus, request_gpus=gpus, requires_gpu=requires,
                 run_time_secs=run, max_wall_time_secs=wall, arch_list=tuple(arch), **kw)


def must(jid="m", cpus=1, gpus=1, **kw):
    return job(jid, cpus=cpus, gpus=gpus, requires=1, **kw)


def can(jid="c", cpus=1, gpus=1, **kw):
    return job(jid, cpus=cpus, gpus=gpus, requires=0, **kw)


def started_pilot(pid, entry, clock=0):
    p = Pilot(id=pid, entry_name=entry.name, site_name=entry.cms_site, submit_time=clock)
    p.advance(PilotState.STARTING, clock)
    p.start_time = clock
    p.walltime_limit_secs = entry.glidein_max_walltime_secs
    return p


def make_slot(pid, node, entry, policy=None, clock=0):
    policy = policy or SitePolicy(entry.cms_site)
    pilot = started_pilot(pid, entry, clock)
    return register_slot(pilot, node, entry, policy, clock), pilot


@pytest.fixture(scope="session")
def wisconsin():
    return parse_factory_entry_xml(WISCONSIN_XML)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
