"""Per-priority contention windows and the slotted backoff countdown.

The countdown is event-driven rather than ticked: a running counter holds a
single expiry event, and freezing converts the elapsed whole idle slots into
decrements. This is observably the same as calling ``on_slot_tick`` every
slot (a slot only counts if the channel stayed free for all of it) while
costing two events per busy period instead of one per slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kernel import US, RngStream, SimulationFault
from .traffic import Priority


def _default_windows() -> dict[int, tuple[int, int]]:
    return {Priority.URGENT: (0, 10), Priority.NORMAL: (11, 20)}


@dataclass(frozen=True)
class ContentionConfig:
    window_by_priority: dict[int, tuple[int, int]] = field(default_factory=_default_windows)
    slot_time: int = 320 * US
    max_retries: int = 5

    def __post_init__(self) -> None:
        if self.slot_time <= 0:
            raise ValueError("slot_time must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        ranges = sorted(self.window_by_priority.items())
        for prio, (lo, hi) in ranges:
            if not 0 <= lo <= hi:
                raise ValueError(f"bad contention window {lo}..{hi} for class {prio}")
        for (_, (_, hi_a)), (_, (lo_b, _)) in zip(ranges, ranges[1:]):
            if hi_a >= lo_b:
                raise ValueError("contention windows must be disjoint and ordered by priority")


def draw_backoff(cfg: ContentionConfig, priority: int, rng: RngStream) -> int:
    """Uniform slot count from the closed window of ``priority``."""
    try:
        lo, hi = cfg.window_by_priority[priority]
    except KeyError:
        raise SimulationFault(f"no contention window configured for class {priority}") from None
    return rng.randint(lo, hi)


@dataclass
class BackoffState:
    phase: str = "idle"  # idle | backoff | transmitting | awaiting_ack
    remaining_slots: int = 0
    retry_count: int = 0
    current: object = None


def on_slot_tick(state: BackoffState, channel: str) -> str | None:
    """Advance one backoff slot; returns ``"transmit"`` when the counter hits 0.

    A busy slot freezes the counter.
    """
    if state.phase != "backoff":
        raise SimulationFault(f"slot tick in phase {state.phase!r}")
    if channel == "busy":
        return None
    if state.remaining_slots > 0:
        state.remaining_slots -= 1
    if state.remaining_slots == 0:
        state.phase = "transmitting"
        return "transmit"
    return None


class Contender:
    """Backoff countdown shared by the BoP-MAC and FROG-MAC stations.

    The network calls ``freeze``/``resume`` on every contending station when
    the channel stops or starts being free for ordinary contention.
    Subclasses implement ``access_channel``.
    """

    def __init__(self, net, node_id: int, slot_time: int) -> None:
        self.net = net
        self.sched = net.sched
        self.id = node_id
        self.slot_time = slot_time
        self.contending = False
        self.remaining = 0
        self._count_from = 0
        self._expiry = None

    def contend(self, slots: int) -> None:
        self.contending = True
        self.remaining = slots
        if self._expiry is not None:
            self.sched.cancel(self._expiry)
            self._expiry = None
        if self.net.channel_free:
            self.resume(self.sched.now)

    def stop_contending(self) -> None:
        if self._expiry is not None:
            self.sched.cancel(self._expiry)
            self._expiry = None
        self.contending = False

    def freeze(self, now: int) -> None:
        ev = self._expiry
        if ev is None or ev[0] == now:
            # frozen already, or the counter ran out on this very slot boundary
            return
        self.remaining -= (now - self._count_from) // self.slot_time
        self.sched.cancel(ev)
        self._expiry = None

    def resume(self, now: int) -> None:
        if self._expiry is None:
            self._count_from = now
            self._expiry = self.sched.schedule(
                now + self.remaining * self.slot_time, self.id, "backoff_expiry", self._expired
            )

    def _expired(self) -> None:
        self._expiry = None
        if self.net.lost_race():
            # keep contending with an empty counter; fires when the channel frees
            self.remaining = 0
            return
        self.contending = False
        self.remaining = 0
        self.access_channel()

    def access_channel(self) -> None:
        raise NotImplementedError
