"""Jobs, GPU devices, nodes, site policies and pilot factory entries.

Every type serialises to JSON with camelCase field names via ``to_dict`` and
``from_dict``. Factory entries can also be read from (and written back to)
the XML entry format used by pilot factories.
"""

from __future__ import annotations

import enum
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

from .adlang import Expression, parse_expression, to_source

ARCHES = ("x86_64", "ppc64le", "aarch64")
DEFAULT_ARCH = "x86_64"

# Walltime attributes in factory entries are read as seconds.
WALLTIME_UNIT_SECS = 1
# Fallbacks for entries that omit them: the usual pledged slot (48 h, 2 GB/core).
DEFAULT_WALLTIME_SECS = 48 * 3600
DEFAULT_MB_PER_CORE = 2000


class IngestionError(ValueError):
    """Input data violates a model invariant or cannot be parsed."""


class GpuUseClass(str, enum.Enum):
    MUST_USE_GPU = "MustUseGPU"
    CAN_USE_GPU = "CanUseGPU"
    CPU_ONLY = "CpuOnly"


class PostWindow(str, enum.Enum):
    OPEN_TO_CPU = "OpenToCpu"
    RETURN_TO_SITE = "ReturnToSite"


def _need(data: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise IngestionError(f"{where}: missing field {key!r}")
    return data[key]


def _int(v: Any, what: str) -> int:
    if isinstance(v, bool):
        raise IngestionError(f"{what}: expected an integer, got {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, str):
        try:
            return int(v.strip())
        except ValueError:
            pass
    raise IngestionError(f"{what}: expected an integer, got {v!r}")


def _arch(v: Any, what: str) -> str:
    if v not in ARCHES:
        raise IngestionError(f"{what}: unknown architecture {v!r} (expected one of {', '.join(ARCHES)})")
    return v


# --------------------------------------------------------------------------
# jobs


@dataclass(frozen=True)
class JobAd:
    id: str
    request_cpus: int = 1
    request_memory_mb: int = 2000
    request_gpus: int = 0
    requires_gpu: int = 0
    cuda_capability: Optional[float] = None
    cuda_runtime: Optional[str] = None
    gpu_memory_mb: Optional[int] = None
    arch_list: Tuple[str, ...] = (DEFAULT_ARCH,)
    max_wall_time_secs: int = 3600
    run_time_secs: int = 3600
    submit_time: int = 0
    extra_requirements: Optional[Expression] = None
    priority: int = 0

    def __post_init__(self):
        where = f"job {self.id!r}"
        if self.requires_gpu not in (0, 1):
            raise IngestionError(f"{where}: requiresGPU must be 0 or 1")
        if self.request_gpus < 0:
            raise IngestionError(f"{where}: requestGPUs must be >= 0")
        if self.requires_gpu == 1 and self.request_gpus <= 0:
            raise IngestionError(f"{where}: requiresGPU=1 requires requestGPUs > 0")
        if self.request_cpus < 1:
            raise IngestionError(f"{where}: requestCpus must be >= 1")
        if self.request_memory_mb < 0:
            raise IngestionError(f"{where}: requestMemoryMB must be >= 0")
        if not self.arch_list:
            raise IngestionError(f"{where}: archList must not be empty")
        for a in self.arch_list:
            _arch(a, f"{where}: archList")
        if len(set(self.arch_list)) != len(self.arch_list):
            raise IngestionError(f"{where}: archList has duplicates")
        if self.run_time_secs < 0 or self.run_time_secs > self.max_wall_time_secs:
            raise IngestionError(f"{where}: runTimeSecs must lie in [0, maxWallTimeSecs]")

    @property
    def use_class(self) -> GpuUseClass:
        return classify_gpu_use(self)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "submitTime": self.submit_time,
            "requestCpus": self.request_cpus,
            "requestMemoryMB": self.request_memory_mb,
            "requestGPUs": self.request_gpus,
            "requiresGPU": self.requires_gpu,
            "cudaCapability": self.cuda_capability,
            "cudaRuntime": self.cuda_runtime,
            "gpuMemoryMB": self.gpu_memory_mb,
            "archList": list(self.arch_list),
            "maxWallTimeSecs": self.max_wall_time_secs,
            "runTimeSecs": self.run_time_secs,
            "extraRequirements": to_source(self.extra_requirements) if self.extra_requirements else None,
            "priority": self.priority,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "JobAd":
        jid = str(_need(d, "id", "job"))
        where = f"job {jid!r}"
        extra = d.get("extraRequirements")
        try:
            extra_expr = parse_expression(extra) if extra else None
        except ValueError as exc:
            raise IngestionError(f"{where}: extraRequirements: {exc}") from None
        cap = d.get("cudaCapability")
        arch = d.get("archList", [DEFAULT_ARCH])
        if isinstance(arch, str):
            arch = [arch]
        return cls(
            id=jid,
            submit_time=_int(d.get("submitTime", 0), f"{where}: submitTime"),
            request_cpus=_int(d.get("requestCpus", 1), f"{where}: requestCpus"),
            request_memory_mb=_int(d.get("requestMemoryMB", 2000), f"{where}: requestMemoryMB"),
            request_gpus=_int(d.get("requestGPUs", 0), f"{where}: requestGPUs"),
            requires_gpu=_int(d.get("requiresGPU", 0), f"{where}: requiresGPU"),
            cuda_capability=None if cap is None else float(cap),
            cuda_runtime=None if d.get("cudaRuntime") is None else str(d["cudaRuntime"]),
            gpu_memory_mb=None if d.get("gpuMemoryMB") is None else _int(d["gpuMemoryMB"], f"{where}: gpuMemoryMB"),
            arch_list=tuple(arch),
            max_wall_time_secs=_int(d.get("maxWallTimeSecs", 3600), f"{where}: maxWallTimeSecs"),
            run_time_secs=_int(d.get("runTimeSecs", 3600), f"{where}: runTimeSecs"),
            extra_requirements=extra_expr,
            priority=_int(d.get("priority", 0), f"{where}: priority"),
        )


def classify_gpu_use(job: JobAd) -> GpuUseClass:
    if job.requires_gpu == 1 and job.request_gpus > 0:
        return GpuUseClass.MUST_USE_GPU
    if job.request_gpus > 0:
        return GpuUseClass.CAN_USE_GPU
    return GpuUseClass.CPU_ONLY


# --------------------------------------------------------------------------
# hardware


@dataclass(frozen=True)
class GpuDevice:
    uuid: str
    device_name: str
    cuda_capability: float
    global_memory_mb: int
    driver_version: str
    max_supported_version: int
    supported_runtimes: Tuple[str, ...]
    clock_mhz: float = 0.0
    compute_units: int = 0
    cores_per_cu: int = 0
    ecc_enabled: bool = False
    nvidia_driver_version: str = ""

    def __post_init__(self):
        if not self.supported_runtimes:
            raise IngestionError(f"GPU {self.uuid!r}: supportedRuntimes must not be empty")

    @property
    def model_key(self) -> Tuple[str, float, int, str]:
        return (self.device_name, self.cuda_capability, self.global_memory_mb, self.driver_version)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "uuid": self.uuid,
            "deviceName": self.device_name,
            "cudaCapability": self.cuda_capability,
            "globalMemoryMB": self.global_memory_mb,
            "driverVersion": self.driver_version,
            "maxSupportedVersion": self.max_supported_version,
            "supportedRuntimes": list(self.supported_runtimes),
            "clockMhz": self.clock_mhz,
            "computeUnits": self.compute_units,
            "coresPerCU": self.cores_per_cu,
            "eccEnabled": self.ecc_enabled,
            "nvidiaDriverVersion": self.nvidia_driver_version,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GpuDevice":
        uuid = str(_need(d, "uuid", "gpu"))
        where = f"GPU {uuid!r}"
        runtimes = d.get("supportedRuntimes", [])
        if isinstance(runtimes, str):
            runtimes = [r.strip() for r in runtimes.split(",") if r.strip()]
        return cls(
            uuid=uuid,
            device_name=str(_need(d, "deviceName", where)),
            cuda_capability=float(_need(d, "cudaCapability", where)),
            global_memory_mb=_int(_need(d, "globalMemoryMB", where), f"{where}: globalMemoryMB"),
            driver_version=str(_need(d, "driverVersion", where)),
            max_supported_version=_int(d.get("maxSupportedVersion", 0), f"{where}: maxSupportedVersion"),
            supported_runtimes=tuple(str(r) for r in runtimes),
            clock_mhz=float(d.get("clockMhz", 0.0)),
            compute_units=_int(d.get("computeUnits", 0), f"{where}: computeUnits"),
            cores_per_cu=_int(d.get("coresPerCU", 0), f"{where}: coresPerCU"),
            ecc_enabled=bool(d.get("eccEnabled", False)),
            nvidia_driver_version=str(d.get("nvidiaDriverVersion", "")),
        )


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    site_name: str
    cpus: int
    memory_mb: int
    arch: str = DEFAULT_ARCH
    gpus: Tuple[GpuDevice, ...] = ()

    def __post_init__(self):
        where = f"node {self.node_id!r}"
        _arch(self.arch, f"{where}: arch")
        if self.cpus < 1:
            raise IngestionError(f"{where}: cpus must be >= 1")
        if len({g.model_key for g in self.gpus}) > 1:
            raise IngestionError(f"{where}: GPUs must all be the same model")
        if len({g.uuid for g in self.gpus}) != len(self.gpus):
            raise IngestionError(f"{where}: duplicate GPU uuid")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodeId": self.node_id,
            "siteName": self.site_name,
            "cpus": self.cpus,
            "memoryMB": self.memory_mb,
            "arch": self.arch,
            "gpus": [g.to_dict() for g in self.gpus],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NodeSpec":
        nid = str(_need(d, "nodeId", "node"))
        where = f"node {nid!r}"
        return cls(
            node_id=nid,
            site_name=str(_need(d, "siteName", where)),
            cpus=_int(_need(d, "cpus", where), f"{where}: cpus"),
            memory_mb=_int(_need(d, "memoryMB", where), f"{where}: memoryMB"),
            arch=d.get("arch", DEFAULT_ARCH),
            gpus=tuple(GpuDevice.from_dict(g) for g in d.get("gpus", [])),
        )


@dataclass(frozen=True)
class SitePolicy:
    site_name: str
    hold_window_secs: int = 1800
    post_window: PostWindow = PostWindow.OPEN_TO_CPU
    max_queued_pilots: int = 10
    ce_grant_period_secs: int = 60

    def __post_init__(self):
        where = f"site {self.site_name!r}"
        if self.hold_window_secs < 0:
            raise IngestionError(f"{where}: holdWindowSecs must be >= 0")
        if self.max_queued_pilots < 0:
            raise IngestionError(f"{where}: maxQueuedPilots must be >= 0")
        if self.ce_grant_period_secs < 1:
            raise IngestionError(f"{where}: ceGrantPeriodSecs must be >= 1")
        object.__setattr__(self, "post_window", PostWindow(self.post_window))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "siteName": self.site_name,
            "holdWindowSecs": self.hold_window_secs,
            "postWindow": self.post_window.value,
            "maxQueuedPilots": self.max_queued_pilots,
            "ceGrantPeriodSecs": self.ce_grant_period_secs,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SitePolicy":
        name = str(_need(d, "siteName", "site policy"))
        where = f"site {name!r}"
        pw = d.get("postWindow", PostWindow.OPEN_TO_CPU.value)
        try:
            pw = PostWindow(pw)
        except ValueError:
            raise IngestionError(f"{where}: postWindow must be OpenToCpu or ReturnToSite") from None
        return cls(
            site_name=name,
            hold_window_secs=_int(d.get("holdWindowSecs", 1800), f"{where}: holdWindowSecs"),
            post_window=pw,
            max_queued_pilots=_int(d.get("maxQueuedPilots", 10), f"{where}: maxQueuedPilots"),
            ce_grant_period_secs=_int(d.get("ceGrantPeriodSecs", 60), f"{where}: ceGrantPeriodSecs"),
        )


# --------------------------------------------------------------------------
# factory entries


@dataclass(frozen=True)
class SubmitAttrs:
    max_memory: int
    xcount: int
    request_gpus: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {"maxMemory": self.max_memory, "xcount": self.xcount, "Request_GPUs": self.request_gpus}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SubmitAttrs":
        return cls(
            max_memory=_int(_need(d, "maxMemory", "submitAttrs"), "submitAttrs.maxMemory"),
            xcount=_int(_need(d, "xcount", "submitAttrs"), "submitAttrs.xcount"),
            request_gpus=_int(d.get("Request_GPUs", 0), "submitAttrs.Request_GPUs"),
        )


def parse_resource_slots(text: str) -> Tuple[str, int, str]:
    """``"GPUs,1,type=main"`` -> ``("GPUs", 1, "main")``; whitespace tolerant."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise IngestionError(f"resource slots {text!r}: expected NAME,COUNT,type=TYPE")
    name, count, kind = parts
    if not name:
        raise IngestionError(f"resource slots {text!r}: empty resource name")
    try:
        n = int(count)
    except ValueError:
        raise IngestionError(f"resource slots {text!r}: count {count!r} is not an integer") from None
    key, eq, value = (s.strip() for s in kind.partition("="))
    if key.lower() != "type" or not eq or not value:
        raise IngestionError(f"resource slots {text!r}: third field must be type=TYPE")
    return name, n, value


@dataclass(frozen=True)
class FactoryEntry:
    name: str
    gatekeeper: str
    cms_site: str
    submit_attrs: SubmitAttrs
    glidein_cpus: int
    glidein_max_mem_mbs: int
    glidein_max_walltime_secs: int
    gridtype: str = "condor"
    resource_slots: Optional[Tuple[str, int, str]] = None
    arch: str = DEFAULT_ARCH
    auth_method: str = ""

    def __post_init__(self):
        where = f"entry {self.name!r}"
        if self.glidein_cpus < 1:
            raise IngestionError(f"{where}: glideinCpus must be >= 1")
        _arch(self.arch, f"{where}: arch")
        if self.resource_slots is not None:
            rs = tuple(self.resource_slots)
            object.__setattr__(self, "resource_slots", rs)
            if rs[0].lower() == "gpus" and rs[1] < 1:
                raise IngestionError(f"{where}: GPU resource slot count must be >= 1")

    @property
    def gpu_count(self) -> int:
        """GPUs each pilot of this entry asks for (0 for CPU entries)."""
        rs = self.resource_slots
        if rs is not None and rs[0].lower() == "gpus":
            return rs[1]
        return 0

    @property
    def is_gpu_entry(self) -> bool:
        return self.gpu_count > 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "gatekeeper": self.gatekeeper,
            "gridtype": self.gridtype,
            "authMethod": self.auth_method,
            "cmsSite": self.cms_site,
            "submitAttrs": self.submit_attrs.to_dict(),
            "glideinCpus": self.glidein_cpus,
            "glideinMaxMemMBs": self.glidein_max_mem_mbs,
            "glideinMaxWalltimeSecs": self.glidein_max_walltime_secs,
            "resourceSlots": list(self.resource_slots) if self.resource_slots else None,
            "arch": self.arch,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FactoryEntry":
        name = str(_need(d, "name", "entry"))
        where = f"entry {name!r}"
        rs = d.get("resourceSlots")
        if isinstance(rs, str):
            rs = parse_resource_slots(rs)
        elif rs is not None:
            if len(rs) != 3:
                raise IngestionError(f"{where}: resourceSlots must be [name, count, type]")
            rs = (str(rs[0]), _int(rs[1], f"{where}: resourceSlots count"), str(rs[2]))
        return cls(
            name=name,
            gatekeeper=str(_need(d, "gatekeeper", where)),
            gridtype=str(d.get("gridtype", "condor")),
            auth_method=str(d.get("authMethod", "")),
            cms_site=str(_need(d, "cmsSite", where)),
            submit_attrs=SubmitAttrs.from_dict(_need(d, "submitAttrs", where)),
            glidein_cpus=_int(_need(d, "glideinCpus", where), f"{where}: glideinCpus"),
            glidein_max_mem_mbs=_int(_need(d, "glideinMaxMemMBs", where), f"{where}: glideinMaxMemMBs"),
            glidein_max_walltime_secs=_int(_need(d, "glideinMaxWalltimeSecs", where),
                                           f"{where}: glideinMaxWalltimeSecs"),
            resource_slots=rs,
            arch=d.get("arch", DEFAULT_ARCH),
        )


def _clean(v: Optional[str]) -> Optional[str]:
    return None if v is None else v.strip()


def parse_factory_entry_xml(text: str) -> FactoryEntry:
    """Read one ``<entry>`` element with its ``submit_attrs`` and ``attrs``.

    Attribute values are whitespace-trimmed and attr names matched without
    regard to case. Raises IngestionError naming the offending field.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise IngestionError(f"malformed factory entry XML: {exc}") from None
    if root.tag != "entry":
        found = root.find(".//entry")
        if found is None:
            raise IngestionError(f"factory entry XML: expected <entry>, found <{root.tag}>")
        root = found

    name = _clean(root.get("name"))
    if not name:
        raise IngestionError("factory entry XML: missing mandatory field 'name'")
    where = f"entry {name!r}"
    gatekeeper = _clean(root.get("gatekeeper"))
    if not gatekeeper:
        raise IngestionError(f"{where}: missing mandatory field 'gatekeeper'")

    submit: Dict[str, str] = {}
    for sa in root.iter("submit_attr"):
        key = (_clean(sa.get("name")) or "").lstrip("+").lower()
        if key:
            submit[key] = _clean(sa.get("value")) or ""

    attrs: Dict[str, str] = {}
    for a in root.iter("attr"):
        key = (_clean(a.get("name")) or "").lower()
        if key:
            attrs[key] = _clean(a.get("value")) or ""

    def attr(key: str, mandatory: bool = False) -> Optional[str]:
        v = attrs.get(key.lower())
        if mandatory and not v:
            raise IngestionError(f"{where}: missing mandatory field {key!r}")
        return v

    site = attr("GLIDEIN_CMSSite", mandatory=True)
    cpus = _int(attr("GLIDEIN_CPUS", mandatory=True), f"{where}: GLIDEIN_CPUS")

    max_mem = attr("GLIDEIN_MaxMemMBs")
    sub_mem = submit.get("maxmemory")
    glidein_mem = _int(max_mem, f"{where}: GLIDEIN_MaxMemMBs") if max_mem else (
        _int(sub_mem, f"{where}: maxMemory") if sub_mem else cpus * DEFAULT_MB_PER_CORE)
    wall = attr("GLIDEIN_Max_Walltime")
    walltime = (_int(wall, f"{where}: GLIDEIN_Max_Walltime") * WALLTIME_UNIT_SECS
                if wall else DEFAULT_WALLTIME_SECS)

    slots_text = attr("GLIDEIN_Resource_Slots")
    try:
        slots = parse_resource_slots(slots_text) if slots_text else None
    except IngestionError as exc:
        raise IngestionError(f"{where}: GLIDEIN_Resource_Slots: {exc}") from None

    return FactoryEntry(
        name=name,
        gatekeeper=gatekeeper,
        gridtype=_clean(root.get("gridtype")) or "",
        auth_method=_clean(root.get("auth_method")) or "",
        cms_site=site,
        submit_attrs=SubmitAttrs(
            max_memory=_int(sub_mem, f"{where}: maxMemory") if sub_mem else glidein_mem,
            xcount=_int(submit["xcount"], f"{where}: xcount") if submit.get("xcount") else cpus,
            request_gpus=_int(submit["request_gpus"], f"{where}: Request_GPUs")
            if submit.get("request_gpus") else 0,
        ),
        glidein_cpus=cpus,
        glidein_max_mem_mbs=glidein_mem,
        glidein_max_walltime_secs=walltime,
        resource_slots=slots,
        arch=_arch(attr("GLIDEIN_Arch") or DEFAULT_ARCH, f"{where}: GLIDEIN_Arch"),
    )


def factory_entry_to_xml(entry: FactoryEntry) -> str:
    """Inverse of :func:`parse_factory_entry_xml`."""
    root = ET.Element("entry", {
        "name": entry.name,
        "auth_method": entry.auth_method,
        "gatekeeper": entry.gatekeeper,
        "gridtype": entry.gridtype,
    })
    submit = ET.SubElement(ET.SubElement(root, "config"), "submit")
    sattrs = ET.SubElement(submit, "submit_attrs")
    sa = entry.submit_attrs
    ET.SubElement(sattrs, "submit_attr", {"name": "+maxMemory", "value": str(sa.max_memory)})
    ET.SubElement(sattrs, "submit_attr", {"name": "+xcount", "value": str(sa.xcount)})
    if sa.request_gpus:
        ET.SubElement(sattrs, "submit_attr", {"name": "Request_GPUs", "value": str(sa.request_gpus)})
    attrs = ET.SubElement(root, "attrs")

    def add(name: str, typ: str, value: str) -> None:
        ET.SubElement(attrs, "attr", {"name": name, "type": typ, "value": value})

    add("GLIDEIN_CMSSite", "string", entry.cms_site)
    add("GLIDEIN_CPUS", "string", str(entry.glidein_cpus))
    add("GLIDEIN_MaxMemMBs", "int", str(entry.glidein_max_mem_mbs))
    add("GLIDEIN_Max_Walltime", "int", str(entry.glidein_max_walltime_secs // WALLTIME_UNIT_SECS))
    if entry.resource_slots:
        n, c, t = entry.resource_slots
        add("GLIDEIN_Resource_Slots", "string", f"{n},{c},type={t}")
    add("GLIDEIN_Arch", "string", entry.arch)
    return ET.tostring(root, encoding="unicode")


def static_entry_compat(job: JobAd, entry: FactoryEntry) -> bool:
    """First-stage check of a job against an entry's static description."""
    if entry.arch not in job.arch_list:
        return False
    if job.max_wall_time_secs > entry.glidein_max_walltime_secs:
        return False
    if job.request_cpus > entry.glidein_cpus:
        return False
    if job.request_memory_mb > entry.glidein_max_mem_mbs:
        return False
    if classify_gpu_use(job) is GpuUseClass.MUST_USE_GPU:
        return entry.gpu_count >= job.request_gpus
    return True

