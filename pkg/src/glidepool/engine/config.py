"""Scenario configuration: JSON schema, validation and workload expansion."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from ..model import (
    FactoryEntry, IngestionError, JobAd, NodeSpec, SitePolicy, parse_factory_entry_xml,
)


class ConfigError(ValueError):
    """Raised with every violated invariant, each prefixed by its config path."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Arrival:
    """Arrival schedule for a job group.

    Either explicit ``times`` or ``base + i * spacing`` plus a uniform
    integer offset in ``[-jitter, +jitter]`` drawn from the scenario seed.
    """
    times: Optional[Tuple[int, ...]] = None
    base_secs: int = 0
    spacing_secs: int = 0
    jitter_secs: int = 0

    def to_dict(self) -> Dict[str, Any]:
        if self.times is not None:
            return {"times": list(self.times)}
        return {"baseSecs": self.base_secs, "spacingSecs": self.spacing_secs,
                "jitterSecs": self.jitter_secs}


@dataclass(frozen=True)
class JobGroup:
    template: JobAd
    count: int = 1
    arrival: Arrival = Arrival()

    def to_dict(self) -> Dict[str, Any]:
        return {"template": self.template.to_dict(), "count": self.count,
                "arrival": self.arrival.to_dict()}


@dataclass(frozen=True)
class SiteConfig:
    policy: SitePolicy
    nodes: Tuple[NodeSpec, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {"policy": self.policy.to_dict(), "nodes": [n.to_dict() for n in self.nodes]}


@dataclass(frozen=True)
class ScenarioConfig:
    duration_secs: int
    sites: Tuple[SiteConfig, ...]
    entries: Tuple[FactoryEntry, ...]
    workload: Tuple[JobGroup, ...]
    seed: int = 0
    fe_period_secs: int = 300
    negotiator_period_secs: int = 60
    name: str = ""
    notes: str = ""

    @property
    def policies(self) -> Dict[str, SitePolicy]:
        return {s.policy.site_name: s.policy for s in self.sites}

    @property
    def nodes(self) -> List[NodeSpec]:
        return [n for s in self.sites for n in s.nodes]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "notes": self.notes,
            "durationSecs": self.duration_secs,
            "seed": self.seed,
            "fePeriodSecs": self.fe_period_secs,
            "negotiatorPeriodSecs": self.negotiator_period_secs,
            "sites": [s.to_dict() for s in self.sites],
            "entries": [e.to_dict() for e in self.entries],
            "workload": [g.to_dict() for g in self.workload],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def expand_workload(config: ScenarioConfig) -> List[JobAd]:
    """Concrete jobs, with ``submit_time`` set to the arrival time.

    Single-job groups keep the template id; larger groups get ``id.N``.
    The only use of randomness in the whole simulator is the jitter here.
    """
    rng = random.Random(config.seed)
    jobs = []
    for group in config.workload:
        arr = group.arrival
        for i in range(group.count):
            if arr.times is not None:
                t = arr.times[i]
            else:
                t = arr.base_secs + i * arr.spacing_secs
                if arr.jitter_secs:
                    t += rng.randint(-arr.jitter_secs, arr.jitter_secs)
            jid = group.template.id if group.count == 1 else f"{group.template.id}.{i}"
            jobs.append(replace(group.template, id=jid, submit_time=max(0, int(t))))
    return jobs


# --------------------------------------------------------------------------
# loading and validation


def _int_field(d: Mapping[str, Any], key: str, default: Any, path: str, errors: List[str]) -> Any:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{path}.{key}: expected an integer, got {v!r}")
        return default
    return v


def _load_entry(raw: Any, path: str, base_dir: Optional[Path]) -> FactoryEntry:
    if isinstance(raw, Mapping) and "xml" in raw:
        p = Path(raw["xml"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        try:
            text = p.read_text()
        except OSError as exc:
            raise IngestionError(f"cannot read {p}: {exc.strerror}") from None
        return parse_factory_entry_xml(text)
    if isinstance(raw, Mapping) and "xmlText" in raw:
        return parse_factory_entry_xml(raw["xmlText"])
    if not isinstance(raw, Mapping):
        raise IngestionError("expected an object")
    return FactoryEntry.from_dict(raw)


def _load_arrival(raw: Any, count: int, path: str, errors: List[str]) -> Arrival:
    if raw is None:
        return Arrival()
    if not isinstance(raw, Mapping):
        errors.append(f"{path}: expected an object")
        return Arrival()
    if "times" in raw:
        times = raw["times"]
        if not isinstance(times, list) or any(isinstance(t, bool) or not isinstance(t, int) for t in times):
            errors.append(f"{path}.times: expected a list of integers")
            return Arrival()
        if len(times) != count:
            errors.append(f"{path}.times: {len(times)} times for count {count}")
        if any(t < 0 for t in times):
            errors.append(f"{path}.times: arrival times must be >= 0")
        return Arrival(times=tuple(times))
    arr = Arrival(
        base_secs=_int_field(raw, "baseSecs", 0, path, errors),
        spacing_secs=_int_field(raw, "spacingSecs", 0, path, errors),
        jitter_secs=_int_field(raw, "jitterSecs", 0, path, errors),
    )
    if arr.jitter_secs < 0 or arr.spacing_secs < 0 or arr.base_secs < 0:
        errors.append(f"{path}: baseSecs, spacingSecs and jitterSecs must be >= 0")
    return arr


def parse_config(data: Mapping[str, Any], base_dir: Union[str, Path, None] = None) -> Tuple[Optional[ScenarioConfig], List[str]]:
    """Build a config from its JSON form, collecting every error found."""
    errors: List[str] = []
    base = Path(base_dir) if base_dir is not None else None
    if not isinstance(data, Mapping):
        return None, ["$: expected a JSON object"]

    duration = _int_field(data, "durationSecs", 0, "$", errors)
    if "durationSecs" not in data:
        errors.append("$.durationSecs: required")
    elif isinstance(duration, int) and duration <= 0:
        errors.append("$.durationSecs: must be > 0")
    seed = _int_field(data, "seed", 0, "$", errors)
    fe_period = _int_field(data, "fePeriodSecs", 300, "$", errors)
    neg_period = _int_field(data, "negotiatorPeriodSecs", 60, "$", errors)
    for key, v in (("fePeriodSecs", fe_period), ("negotiatorPeriodSecs", neg_period)):
        if isinstance(v, int) and v < 1:
            errors.append(f"$.{key}: must be >= 1")

    sites: List[SiteConfig] = []
    site_names: Dict[str, str] = {}
    node_ids: Dict[str, str] = {}
    gpu_ids: Dict[str, str] = {}
    for i, raw in enumerate(data.get("sites", [])):
        path = f"$.sites[{i}]"
        if not isinstance(raw, Mapping):
            errors.append(f"{path}: expected an object")
            continue
        try:
            policy = SitePolicy.from_dict(raw.get("policy", {}))
        except (IngestionError, TypeError) as exc:
            errors.append(f"{path}.policy: {exc}")
            continue
        if policy.site_name in site_names:
            errors.append(f"{path}.policy.siteName: duplicate site {policy.site_name!r} "
                          f"(also {site_names[policy.site_name]})")
        site_names[policy.site_name] = path
        nodes = []
        for j, nraw in enumerate(raw.get("nodes", [])):
            npath = f"{path}.nodes[{j}]"
            if not isinstance(nraw, Mapping):
                errors.append(f"{npath}: expected an object")
                continue
            nraw = dict(nraw)
            nraw.setdefault("siteName", policy.site_name)
            try:
                node = NodeSpec.from_dict(nraw)
            except (IngestionError, TypeError, ValueError) as exc:
                errors.append(f"{npath}: {exc}")
                continue
            if node.site_name != policy.site_name:
                errors.append(f"{npath}.siteName: {node.site_name!r} does not match enclosing site "
                              f"{policy.site_name!r}")
            if node.node_id in node_ids:
                errors.append(f"{npath}.nodeId: duplicate node {node.node_id!r} (also {node_ids[node.node_id]})")
            node_ids[node.node_id] = npath
            for k, g in enumerate(node.gpus):
                if g.uuid in gpu_ids:
                    errors.append(f"{npath}.gpus[{k}].uuid: duplicate GPU uuid {g.uuid!r} "
                                  f"(also {gpu_ids[g.uuid]})")
                gpu_ids[g.uuid] = f"{npath}.gpus[{k}]"
            nodes.append(node)
        sites.append(SiteConfig(policy=policy, nodes=tuple(nodes)))
    if not data.get("sites"):
        errors.append("$.sites: at least one site is required")

    entries: List[FactoryEntry] = []
    entry_names: Dict[str, str] = {}
    for i, raw in enumerate(data.get("entries", [])):
        path = f"$.entries[{i}]"
        try:
            entry = _load_entry(raw, path, base)
        except (IngestionError, TypeError) as exc:
            errors.append(f"{path}: {exc}")
            continue
        if entry.name in entry_names:
            errors.append(f"{path}.name: duplicate entry {entry.name!r} (also {entry_names[entry.name]})")
        entry_names[entry.name] = path
        if entry.cms_site not in site_names:
            errors.append(f"{path}.cmsSite: site {entry.cms_site!r} is not configured")
        entries.append(entry)

    workload: List[JobGroup] = []
    job_ids: Dict[str, str] = {}
    for i, raw in enumerate(data.get("workload", [])):
        path = f"$.workload[{i}]"
        if not isinstance(raw, Mapping):
            errors.append(f"{path}: expected an object")
            continue
        count = _int_field(raw, "count", 1, path, errors)
        if isinstance(count, int) and count < 0:
            errors.append(f"{path}.count: must be >= 0")
            count = 0
        try:
            template = JobAd.from_dict(raw.get("template", {}))
        except (IngestionError, TypeError, ValueError) as exc:
            errors.append(f"{path}.template: {exc}")
            continue
        arrival = _load_arrival(raw.get("arrival"), count, f"{path}.arrival", errors)
        ids = [template.id] if count == 1 else [f"{template.id}.{k}" for k in range(count)]
        for jid in ids:
            if jid in job_ids:
                errors.append(f"{path}.template.id: job id {jid!r} collides with {job_ids[jid]}")
                break
            job_ids[jid] = path
        workload.append(JobGroup(template=template, count=count, arrival=arrival))

    if errors:
        return None, errors
    return ScenarioConfig(
        duration_secs=duration,
        seed=seed,
        fe_period_secs=fe_period,
        negotiator_period_secs=neg_period,
        sites=tuple(sites),
        entries=tuple(entries),
        workload=tuple(workload),
        name=str(data.get("name", "")),
        notes=str(data.get("notes", "")),
    ), []


def config_from_dict(data: Mapping[str, Any], base_dir: Union[str, Path, None] = None) -> ScenarioConfig:
    config, errors = parse_config(data, base_dir)
    if errors:
        raise ConfigError(errors)
    return config


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON ({exc})"]) from None
    return config_from_dict(data, base_dir=path.parent)
