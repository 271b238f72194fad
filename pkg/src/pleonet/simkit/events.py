"""Event records and a deterministic priority queue."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

EVENT_KINDS = ("topology_snapshot", "traffic_arrival", "link_fade_update", "failure",
               "sla_request", "sla_expiry", "control_cycle")


@dataclass(frozen=True, order=True)
class Event:
    epoch_s: float
    seq: int
    kind: str = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)

    def record(self) -> dict:
        return {"epoch_s": self.epoch_s, "seq": self.seq, "kind": self.kind, "payload": self.payload}


class EventQueue:
    """Min-heap on (epoch_s, seq); seq is assigned at insertion so equal
    times pop in the order they were scheduled."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0

    def push(self, epoch_s: float, kind: str, payload: dict | None = None) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        ev = Event(float(epoch_s), self._seq, kind, payload or {})
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)
