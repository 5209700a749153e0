"""Per-class delay/throughput accounting and replication statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import fmean, stdev
from typing import NamedTuple

from scipy import stats

from .kernel import S, SimulationFault


class DelaySample(NamedTuple):
    packet_id: int
    priority: int
    generated_at: int
    delivered_at: int

    @property
    def delay(self) -> int:
        return self.delivered_at - self.generated_at


@dataclass
class ClassStats:
    generated: int = 0
    delivered: int = 0
    mac_dropped: int = 0
    queue_dropped: int = 0
    delay_sum: int = 0  # ns, over counted samples
    delay_count: int = 0
    payload_bytes: int = 0  # counted deliveries only
    collisions: int = 0

    @property
    def dropped(self) -> int:
        return self.mac_dropped + self.queue_dropped

    @property
    def mean_delay(self) -> float | None:
        return self.delay_sum / self.delay_count if self.delay_count else None


class RunMetrics:
    """Accumulators private to one simulation run.

    Packets generated before ``warmup`` still count towards conservation but
    contribute neither delay samples nor throughput bytes.
    """

    def __init__(self, classes: int = 2, warmup: int = 0, keep_samples: bool = False) -> None:
        self.by_class = [ClassStats() for _ in range(classes)]
        self.warmup = warmup
        self.samples: list[DelaySample] | None = [] if keep_samples else None
        self.node_bytes: dict[tuple[int, int], int] = {}
        # (src, priority) -> [generated, delivered, dropped]
        self.per_node: dict[tuple[int, int], list[int]] = {}

    def _node(self, p) -> list[int]:
        key = (p.src, p.priority)
        counts = self.per_node.get(key)
        if counts is None:
            counts = self.per_node[key] = [0, 0, 0]
        return counts

    def record_generated(self, p) -> None:
        self.by_class[p.priority].generated += 1
        self._node(p)[0] += 1

    def record_delivery(self, p, t: int) -> None:
        if p.delivered_at is not None:
            raise SimulationFault(f"packet {p.id} delivered twice (at {p.delivered_at} and {t})")
        if p.dropped:
            raise SimulationFault(f"packet {p.id} delivered after being dropped")
        if t < p.generated_at:
            raise SimulationFault(f"packet {p.id} delivered before it was generated")
        p.delivered_at = t
        cs = self.by_class[p.priority]
        cs.delivered += 1
        self._node(p)[1] += 1
        if p.generated_at >= self.warmup:
            cs.delay_sum += t - p.generated_at
            cs.delay_count += 1
            cs.payload_bytes += p.payload_len
            key = (p.src, p.priority)
            self.node_bytes[key] = self.node_bytes.get(key, 0) + p.payload_len
        if self.samples is not None:
            self.samples.append(DelaySample(p.id, p.priority, p.generated_at, t))

    def record_drop(self, p, where: str) -> None:
        """Count a drop unless the sink already holds the packet."""
        if p.delivered_at is not None:
            return
        p.dropped = True
        self._node(p)[2] += 1
        cs = self.by_class[p.priority]
        if where == "queue":
            cs.queue_dropped += 1
        else:
            cs.mac_dropped += 1


def throughput(payload_bytes: int, duration: int) -> float:
    """Delivered payload bytes per second over ``duration`` ns."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    return payload_bytes * S / duration


@lru_cache(maxsize=None)
def t_quantile(df: int) -> float:
    return float(stats.t.ppf(0.975, df))


def ci95(values) -> tuple[float, float | None]:
    """Mean and Student-t 95% half-width; half-width is None for n < 2."""
    values = list(values)
    if not values:
        raise ValueError("ci95 of an empty sample")
    mean = fmean(values)
    n = len(values)
    if n < 2:
        return mean, None
    return mean, t_quantile(n - 1) * stdev(values) / math.sqrt(n)


@dataclass
class MetricSeries:
    """One (protocol, priority, node_count, fragment_payload) point across replications."""

    key: tuple
    mean_delay: list[float | None] = field(default_factory=list)  # ns
    throughput: list[float] = field(default_factory=list)  # B/s
    delivered: list[int] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)
    collisions: list[int] = field(default_factory=list)

    def add(self, cs: ClassStats, measured: int) -> None:
        self.mean_delay.append(cs.mean_delay)
        self.throughput.append(throughput(cs.payload_bytes, measured))
        self.delivered.append(cs.delivered)
        self.dropped.append(cs.dropped)
        self.collisions.append(cs.collisions)

    @property
    def replications(self) -> int:
        return len(self.throughput)

    def delay_ci(self) -> tuple[float | None, float | None]:
        delays = [d for d in self.mean_delay if d is not None]
        if not delays:
            return None, None
        mean, half = ci95(delays)
        if len(delays) != self.replications:
            half = None
        return mean, half

    def throughput_ci(self) -> tuple[float, float | None]:
        return ci95(self.throughput)
