"""Event records and the JSON-lines log format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Union

KINDS = (
    "JobArrival", "FECycle", "PilotSubmitted", "PilotCancelled", "PilotGranted",
    "SlotRegistered", "NegotiationCycle", "JobStarted", "JobCompleted", "JobRequeued",
    "HoldWindowExpired", "SlotRetired", "PilotWalltimeExpired",
)


@dataclass(frozen=True)
class Event:
    time: int
    seq: int
    kind: str
    payload: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {"time": self.time, "seq": self.seq, "kind": self.kind, "payload": self.payload}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Event":
        return cls(int(d["time"]), int(d["seq"]), str(d["kind"]), dict(d.get("payload", {})))


class EventLog:
    """Append-only event sequence; ``seq`` is assigned on append."""

    def __init__(self, events: Iterable[Event] = ()):
        self.events: List[Event] = list(events)

    def append(self, time: int, kind: str, payload: Dict[str, Any]) -> Event:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if self.events and time < self.events[-1].time:
            raise ValueError(f"event at t={time} after t={self.events[-1].time}")
        ev = Event(time, len(self.events), kind, payload)
        self.events.append(ev)
        return ev

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> List[Event]:
        return [e for e in self.events if e.kind in kinds]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        return cls(Event.from_dict(json.loads(line)) for line in text.splitlines() if line.strip())

    @classmethod
    def read(cls, path: Union[str, Path]) -> "EventLog":
        return cls.from_jsonl(Path(path).read_text())
