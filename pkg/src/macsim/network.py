"""One simulation run of a single-hop star: sink 0, sources 1..n-1.

Every station hears every frame, so channel reservation (an ongoing FROG-MAC
burst) is tracked once here rather than per station.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count

from .bop import BopConfig, BopNode, BopSink
from .contention import ContentionConfig
from .frog import FrogConfig, FrogNode, FrogSink
from .kernel import PRNG_NAME, RngStream, S, SimulationFault, make_scheduler
from .medium import Medium, PhyConfig
from .metrics import RunMetrics
from .traffic import (
    MAX_PAYLOAD,
    NORMAL_CBR,
    URGENT_POISSON,
    GeneratorSpec,
    NodeQueues,
    Packet,
    first_arrival,
    next_arrival,
)

PROTOCOLS = ("bop", "frog")

# RNG stream ids: node * STREAMS_PER_NODE + purpose
STREAMS_PER_NODE = 16
BACKOFF_STREAM = 0
GENERATOR_STREAM = 1  # + generator index


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines one run apart from the seed."""

    protocol: str = "bop"
    node_count: int = 11
    fragment_payload: int = 16
    duration: int = 1000 * S
    phy: PhyConfig = field(default_factory=PhyConfig)
    contention: ContentionConfig = field(default_factory=ContentionConfig)
    t_int: int = 600_000
    payload_len: int = MAX_PAYLOAD
    queue_capacity: int = 50
    generators: tuple[GeneratorSpec, ...] = (URGENT_POISSON, NORMAL_CBR)
    # per-source generator override: {node_id: (spec, ...)}
    node_generators: dict[int, tuple[GeneratorSpec, ...]] | None = None
    warmup: int = 0
    bop_rts_cts: bool = False
    urgent_switch: bool = True
    recontend_after_interrupt: bool = True

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.node_count < 2:
            raise ValueError("node_count counts the sink and must be >= 2")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.warmup < self.duration:
            raise ValueError("warmup must lie inside the run")
        if self.protocol == "frog" and self.t_int <= self.phy.tx_duration(5):
            raise ValueError("t_int must exceed the RTS airtime so an RTS fits in a pause")

    def mac_config(self):
        if self.protocol == "bop":
            return BopConfig(self.contention, rts_cts=self.bop_rts_cts, urgent_switch=self.urgent_switch)
        return FrogConfig(self.fragment_payload, self.t_int, contention=self.contention,
                          urgent_switch=self.urgent_switch,
                          recontend_after_interrupt=self.recontend_after_interrupt)

    def generators_for(self, node_id: int) -> tuple[GeneratorSpec, ...]:
        if self.node_generators is not None and node_id in self.node_generators:
            return self.node_generators[node_id]
        return self.generators


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    metrics: RunMetrics
    transmitted: dict
    delivered_frames: dict
    residual: list[int]
    node_residual: dict
    preemptions: int
    urgent_over_normal: int
    overlap_violations: int
    events: int
    log: list | None = None
    packets: list[Packet] | None = None
    prng: str = PRNG_NAME

    @property
    def measured(self) -> int:
        return self.config.duration - self.config.warmup

    def conservation_ok(self) -> bool:
        """generated = delivered + dropped + residual, per class and per (node, class)."""
        if not all(cs.generated == cs.delivered + cs.dropped + res
                   for cs, res in zip(self.metrics.by_class, self.residual)):
            return False
        return all(gen == dlv + drp + self.node_residual.get(key, 0)
                   for key, (gen, dlv, drp) in self.metrics.per_node.items())

    def aggregate_throughput(self) -> float:
        """All classes, payload bytes per second."""
        total = sum(cs.payload_bytes for cs in self.metrics.by_class)
        return total * S / self.measured


class Network:
    def __init__(self, cfg: RunConfig, seed: int, *, trace=None, keep_log: bool = False,
                 keep_samples: bool = False, keep_packets: bool = False, pure: bool = False,
                 coalesce: bool = True) -> None:
        self.cfg = cfg
        self.seed = seed
        self.sched = make_scheduler(pure)
        self.sched.trace = trace
        self.medium = Medium(self.sched, cfg.phy, self, keep_log=keep_log)
        self.metrics = RunMetrics(classes=2, warmup=cfg.warmup, keep_samples=keep_samples)
        self.channel_free = True
        self.burst_owner = None
        self.burst_since = 0
        self.pause_end = None
        self.preemptions = 0
        self.packets: list[Packet] | None = [] if keep_packets else None
        self._ids = count()
        self.end = cfg.duration
        # per-class queued packets over all sources
        self.census = [0, 0]
        # burst fast path; needs per-event output switched off
        self.coalesce = coalesce and trace is None and not keep_log

        mac = cfg.mac_config()
        if cfg.protocol == "bop":
            self.sink = BopSink(self)
            make = BopNode
        else:
            self.sink = FrogSink(self, mac)
            make = FrogNode
        self.sources = []
        for node_id in range(1, cfg.node_count):
            rng = RngStream(seed, node_id * STREAMS_PER_NODE + BACKOFF_STREAM)
            self.sources.append(make(self, node_id, mac, NodeQueues(cfg.queue_capacity, census=self.census), rng))
        self.nodes = [self.sink, *self.sources]

        for node in self.sources:
            for g, spec in enumerate(cfg.generators_for(node.id)):
                rng = RngStream(seed, node.id * STREAMS_PER_NODE + GENERATOR_STREAM + g)
                t = first_arrival(spec, rng)
                if t <= self.end:
                    self.sched.schedule(t, node.id, _arrival_action(spec), self._arrival,
                                        (node, spec, rng))

    # -- traffic ----------------------------------------------------------

    def _arrival(self, node, spec: GeneratorSpec, rng: RngStream) -> None:
        now = self.sched.now
        p = Packet(next(self._ids), spec.priority, node.id, now, self.cfg.payload_len)
        if self.packets is not None:
            self.packets.append(p)
        self.metrics.record_generated(p)
        node.on_arrival(p)
        t = next_arrival(spec, rng, now)
        if t <= self.end:
            self.sched.schedule(t, node.id, _arrival_action(spec), self._arrival, (node, spec, rng))

    def deliver(self, p: Packet) -> None:
        self.metrics.record_delivery(p, self.sched.now)

    def mac_drop(self, p: Packet) -> None:
        self.metrics.record_drop(p, "mac")

    def queue_drop(self, p: Packet) -> None:
        self.metrics.record_drop(p, "queue")

    # -- channel ----------------------------------------------------------

    def transmit(self, src: int, frame) -> None:
        self.medium.begin_transmission(src, frame)
        if self.channel_free:
            self.update_channel()

    def on_tx_end(self, tx) -> None:
        self.nodes[tx.src].on_frame_sent(tx)
        if not tx.destroyed:
            self.nodes[tx.frame.dst].on_receive(tx.frame)
        if not self.channel_free:
            self.update_channel()

    def update_channel(self) -> None:
        free = self.burst_owner is None and not self.medium.is_busy()
        if free == self.channel_free:
            return
        self.channel_free = free
        now = self.sched.now
        if free:
            for node in self.sources:
                if node.contending:
                    node.resume(now)
                elif getattr(node, "phase", None) == "suspended":
                    node.on_channel_released()
                    if not self.channel_free:
                        break
        else:
            for node in self.sources:
                if node.contending:
                    node.freeze(now)

    def lost_race(self) -> bool:
        """True if a station whose backoff just ran out must not transmit.

        Same-instant starts are allowed (that is how equal draws collide);
        anything that began strictly earlier blocks access.
        """
        return self.medium.busy_before() or (
            self.burst_owner is not None and self.burst_since < self.sched.now)

    # -- FROG-MAC burst reservation --------------------------------------

    def start_burst(self, node) -> None:
        if self.burst_owner is not None and self.burst_owner is not node:
            raise SimulationFault(f"burst of node {node.id} overlaps the burst of node {self.burst_owner.id}")
        self.burst_owner = node
        self.burst_since = self.sched.now
        self.pause_end = None
        self.update_channel()

    def begin_pause(self, owner, end: int) -> None:
        self.pause_end = end
        if self.census[0]:
            for node in self.sources:
                node.try_pause_access()

    def silent_fragments(self, node, p, indices, total: int, first_start: int, step: int, airtime: int) -> None:
        """Book fragments that ``node`` sent while nothing else happened."""
        self.medium.account_unobserved("FRAG", len(indices), first_start, first_start + (len(indices) - 1) * step + airtime)
        self.sink.absorb_fragments(node.id, p.id, indices, total, first_start + airtime, step)

    def end_pause(self) -> None:
        self.pause_end = None

    def preempt_burst(self) -> None:
        owner = self.burst_owner
        self.burst_owner = None
        self.pause_end = None
        self.preemptions += 1
        owner.on_preempted()
        self.update_channel()

    def clear_burst(self) -> None:
        if self.burst_owner is None:
            return
        self.burst_owner = None
        self.pause_end = None
        self.update_channel()

    # -- run ----------------------------------------------------------------

    def run(self) -> RunResult:
        events = self.sched.run_until(self.end)
        residual = [0, 0]
        node_residual = {}
        for node in self.sources:
            for prio, fifo in enumerate(node.queues.fifos):
                left = sum(1 for p in fifo if p.delivered_at is None)
                residual[prio] += left
                node_residual[(node.id, prio)] = left
        for prio, n in self.medium.collisions.items():
            self.metrics.by_class[prio].collisions += n
        med = self.medium
        return RunResult(
            config=self.cfg,
            seed=self.seed,
            metrics=self.metrics,
            transmitted=dict(med.transmitted),
            delivered_frames=dict(med.delivered),
            residual=residual,
            node_residual=node_residual,
            preemptions=self.preemptions,
            urgent_over_normal=med.urgent_over_normal,
            overlap_violations=med.overlap_violations,
            events=events,
            log=med.log,
            packets=self.packets,
        )


def _arrival_action(spec: GeneratorSpec) -> str:
    return "arrival_urgent" if spec.priority == 0 else "arrival_normal"


def simulate(cfg: RunConfig, seed: int, **kwargs) -> RunResult:
    return Network(cfg, seed, **kwargs).run()
