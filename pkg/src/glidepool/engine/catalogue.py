"""Per-site GPU inventory, one row per site and device model."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Tuple, Union

from .config import ScenarioConfig
from .events import Event, EventLog

CSV_HEADER = ("site", "device_name", "device_count", "cuda_capability", "global_memory_mb",
              "driver_version", "supported_runtimes")


@dataclass(frozen=True)
class CatalogueRow:
    site: str
    device_name: str
    device_count: int
    cuda_capability: float
    global_memory_mb: int
    driver_version: str
    supported_runtimes: str

    def as_tuple(self) -> Tuple[Any, ...]:
        return (self.site, self.device_name, self.device_count, self.cuda_capability,
                self.global_memory_mb, self.driver_version, self.supported_runtimes)


def _rows(observations: Iterable[Tuple[str, str, Dict[str, Any]]]) -> List[CatalogueRow]:
    """observations: (site, uuid, model dict) triples, first model seen wins."""
    groups: Dict[Tuple[str, str], Tuple[Dict[str, Any], set]] = {}
    for site, uuid, model in observations:
        key = (site, model["deviceName"])
        if key not in groups:
            groups[key] = (model, set())
        groups[key][1].add(uuid)
    rows = []
    for (site, name), (model, uuids) in sorted(groups.items()):
        rows.append(CatalogueRow(
            site=site,
            device_name=name,
            device_count=len(uuids),
            cuda_capability=float(model["cudaCapability"]),
            global_memory_mb=int(model["globalMemoryMB"]),
            driver_version=str(model["driverVersion"]),
            supported_runtimes=",".join(model["supportedRuntimes"]),
        ))
    return rows


def gpu_catalogue(source: Union[EventLog, Iterable[Event], ScenarioConfig]) -> List[CatalogueRow]:
    """One row per (site, device model) over every GPU ever registered.

    Given a config instead of a log, every configured GPU counts.
    """
    if isinstance(source, ScenarioConfig):
        obs = []
        for node in source.nodes:
            for g in node.gpus:
                obs.append((node.site_name, g.uuid, {
                    "deviceName": g.device_name, "cudaCapability": g.cuda_capability,
                    "globalMemoryMB": g.global_memory_mb, "driverVersion": g.driver_version,
                    "supportedRuntimes": list(g.supported_runtimes)}))
        return _rows(obs)
    obs = []
    for ev in source:
        if ev.kind == "SlotRegistered" and ev.payload.get("gpuModel"):
            for uuid in ev.payload["gpuUuids"]:
                obs.append((ev.payload["site"], uuid, ev.payload["gpuModel"]))
    return _rows(obs)


def catalogue_csv(rows: Iterable[CatalogueRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_tuple())
    return buf.getvalue()
