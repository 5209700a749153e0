"""Two-class application workload and per-node transmit queues."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum

from .kernel import MS, S, RngStream

MAX_PAYLOAD = 121


class Priority(IntEnum):
    """Traffic classes; a lower value is more urgent."""

    URGENT = 0
    NORMAL = 1

    @property
    def label(self) -> str:
        return self.name.lower()


class Packet:
    __slots__ = ("id", "priority", "src", "generated_at", "payload_len",
                 "delivered_at", "dropped", "retries", "backoff_draws", "frames_sent")

    def __init__(self, id, priority, src, generated_at, payload_len=MAX_PAYLOAD):
        if not 1 <= payload_len <= MAX_PAYLOAD:
            raise ValueError(f"payload_len must be in 1..{MAX_PAYLOAD}, got {payload_len}")
        self.id = id
        self.priority = priority
        self.src = src
        self.generated_at = generated_at
        self.payload_len = payload_len
        self.delivered_at = None
        self.dropped = False
        self.retries = 0
        self.backoff_draws: list[int] = []
        self.frames_sent = 0

    def __repr__(self) -> str:
        return f"Packet(id={self.id}, {Priority(self.priority).label}, src={self.src}, t={self.generated_at})"


@dataclass(frozen=True)
class GeneratorSpec:
    priority: int
    law: str  # "cbr" or "poisson"
    interval: int  # CBR period or Poisson mean inter-arrival, ns

    def __post_init__(self) -> None:
        if self.law not in ("cbr", "poisson"):
            raise ValueError(f"unknown arrival law {self.law!r}")
        if self.interval <= 0:
            raise ValueError("arrival interval must be positive")


URGENT_POISSON = GeneratorSpec(Priority.URGENT, "poisson", 2 * S)
NORMAL_CBR = GeneratorSpec(Priority.NORMAL, "cbr", 200 * MS)


def next_arrival(spec: GeneratorSpec, rng: RngStream, now: int) -> int:
    if spec.law == "cbr":
        return now + spec.interval
    return now + rng.exponential_ns(spec.interval)


def first_arrival(spec: GeneratorSpec, rng: RngStream) -> int:
    """First arrival of a generator started at t=0.

    CBR sources fire first at ``period - offset`` with a seeded offset in
    ``[0, period)``, so the first arrival is never at t=0 and nodes are not
    phase-locked; a run of length D then yields exactly D // period packets.
    """
    if spec.law == "cbr":
        return spec.interval - int(rng.random() * spec.interval)
    return rng.exponential_ns(spec.interval)


class NodeQueues:
    """Per-class FIFOs with a per-class capacity; class 0 is served first."""

    def __init__(self, capacity: int = 50, classes: int = 2, census: list[int] | None = None) -> None:
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.capacity = capacity
        self.fifos: list[deque[Packet]] = [deque() for _ in range(classes)]
        self.drops = [0] * classes
        # per-class queued totals, optionally shared by every node of a network
        self.census = census if census is not None else [0] * classes

    @property
    def urgent_fifo(self) -> deque[Packet]:
        return self.fifos[Priority.URGENT]

    @property
    def normal_fifo(self) -> deque[Packet]:
        return self.fifos[Priority.NORMAL]

    def __len__(self) -> int:
        return sum(len(f) for f in self.fifos)


def enqueue(q: NodeQueues, p: Packet) -> bool:
    fifo = q.fifos[p.priority]
    if len(fifo) >= q.capacity:
        q.drops[p.priority] += 1
        p.dropped = True
        return False
    fifo.append(p)
    q.census[p.priority] += 1
    return True


def dequeue(q: NodeQueues, p: Packet) -> None:
    """Remove ``p``, which must be the head of its class FIFO."""
    fifo = q.fifos[p.priority]
    if not fifo or fifo[0] is not p:
        raise ValueError(f"packet {p.id} is not at the head of its queue")
    fifo.popleft()
    q.census[p.priority] -= 1


def select_next(q: NodeQueues) -> Packet | None:
    """Head of the most urgent non-empty FIFO; the packet stays queued."""
    for fifo in q.fifos:
        if fifo:
            return fifo[0]
    return None
