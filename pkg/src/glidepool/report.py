"""Figures rendered from an event log (matplotlib, file output only)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine.catalogue import CatalogueRow  # noqa: E402
from .engine.events import EventLog  # noqa: E402
from .engine.metrics import claim_intervals, slot_intervals  # noqa: E402


def _step(points: List[Tuple[int, int]], end: int) -> Tuple[List[int], List[int]]:
    xs, ys = [0], [0]
    level = 0
    for t, d in sorted(points):
        xs.append(t)
        ys.append(level)
        level += d
        xs.append(t)
        ys.append(level)
    xs.append(max(end, xs[-1]))
    ys.append(level)
    return xs, ys


def gpu_usage_series(log: EventLog, end: int):
    used, registered = [], []
    for c in claim_intervals(log, end):
        if c.gpu_uuids:
            used += [(c.start, len(c.gpu_uuids)), (c.end, -len(c.gpu_uuids))]
    for s in slot_intervals(log, end):
        if s.gpu_uuids:
            registered += [(s.start, len(s.gpu_uuids)), (s.end, -len(s.gpu_uuids))]
    return _step(used, end), _step(registered, end)


def pilot_state_series(log: EventLog, end: int) -> Dict[str, Tuple[List[int], List[int]]]:
    """Counts of queued and running pilots over time."""
    queued: List[Tuple[int, int]] = []
    running: List[Tuple[int, int]] = []
    for ev in log:
        if ev.kind == "PilotSubmitted":
            queued.append((ev.time, 1))
        elif ev.kind == "PilotCancelled":
            queued.append((ev.time, -1))
        elif ev.kind == "PilotGranted":
            queued.append((ev.time, -1))
            running.append((ev.time, 1))
        elif ev.kind in ("SlotRetired", "PilotWalltimeExpired"):
            running.append((ev.time, -1))
    return {"queued": _step(queued, end), "running": _step(running, end)}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_figures(log: EventLog, rows: List[CatalogueRow], out_dir, end: int) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    (ux, uy), (rx, ry) = gpu_usage_series(log, end)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot([x / 3600 for x in rx], ry, label="registered", color="0.6")
    ax.plot([x / 3600 for x in ux], uy, label="claimed", color="tab:green")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("GPUs")
    ax.legend(frameon=False)
    paths.append(_save(fig, out / "gpus_in_use.png"))

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for label, (xs, ys) in pilot_state_series(log, end).items():
        ax.plot([x / 3600 for x in xs], ys, label=label)
    ax.set_xlabel("time [h]")
    ax.set_ylabel("pilots")
    ax.legend(frameon=False)
    paths.append(_save(fig, out / "pilot_states.png"))

    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.4 * len(rows) + 1)))
    labels = [f"{r.site}\n{r.device_name}" for r in rows]
    ax.barh(range(len(rows)), [r.device_count for r in rows], color="tab:blue")
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("devices")
    paths.append(_save(fig, out / "gpu_catalogue.png"))
    return paths
