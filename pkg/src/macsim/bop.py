"""BoP-MAC: CSMA with non-overlapping per-priority contention windows.

Stations send whole DATA frames (optionally behind RTS/CTS) and wait for an
ACK. Once a DATA frame is on air nothing can pre-empt it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .contention import (
    BackoffState,
    ContentionConfig,
    Contender,
    draw_backoff,
    on_slot_tick,
)
from .medium import ACK, CTS, DATA, HEADER_BYTES, RTS, Frame
from .traffic import NodeQueues, Packet, dequeue, enqueue, select_next

__all__ = [
    "BackoffState",
    "BopConfig",
    "BopNode",
    "BopSink",
    "ContentionConfig",
    "draw_backoff",
    "on_data_outcome",
    "on_slot_tick",
]

SINK = 0


@dataclass(frozen=True)
class BopConfig:
    contention: ContentionConfig = field(default_factory=ContentionConfig)
    rts_cts: bool = False
    # let an urgent arrival replace a normal packet that is still backing off
    urgent_switch: bool = True


def on_data_outcome(state: BackoffState, outcome: str, cfg: ContentionConfig) -> str:
    """Resolve an ACK wait: ``"delivered"``, ``"retry"`` or ``"drop"``."""
    if outcome == "ack_received":
        state.phase = "idle"
        state.retry_count = 0
        return "delivered"
    if outcome != "ack_timeout":
        raise ValueError(f"unknown outcome {outcome!r}")
    state.retry_count += 1
    if state.retry_count > cfg.max_retries:
        state.phase = "idle"
        state.retry_count = 0
        return "drop"
    state.phase = "backoff"
    return "retry"


class BopNode(Contender):
    """A BoP-MAC source station."""

    def __init__(self, net, node_id: int, cfg: BopConfig, queues: NodeQueues, rng) -> None:
        super().__init__(net, node_id, cfg.contention.slot_time)
        self.cfg = cfg
        self.queues = queues
        self.rng = rng
        self.state = BackoffState()
        self._timer = None
        phy = net.medium.phy
        self._ack_wait = phy.tx_duration(5) + 2 * cfg.contention.slot_time
        self._cts_wait = phy.tx_duration(5) + 2 * cfg.contention.slot_time

    @property
    def phase(self) -> str:
        return self.state.phase

    def on_arrival(self, p: Packet) -> None:
        if not enqueue(self.queues, p):
            self.net.queue_drop(p)
            return
        st = self.state
        if st.phase == "idle":
            self._start_next()
        elif (self.cfg.urgent_switch and st.phase == "backoff"
              and p.priority < st.current.priority):
            st.retry_count = 0
            st.current = p
            self._backoff()

    def _start_next(self) -> None:
        st = self.state
        st.current = select_next(self.queues)
        st.retry_count = 0
        if st.current is None:
            st.phase = "idle"
            return
        self._backoff()

    def _backoff(self) -> None:
        st = self.state
        st.phase = "backoff"
        slots = draw_backoff(self.cfg.contention, st.current.priority, self.rng)
        st.current.backoff_draws.append(slots)
        st.remaining_slots = slots
        self.contend(slots)

    def access_channel(self) -> None:
        st = self.state
        st.phase = "transmitting"
        st.remaining_slots = 0
        p = st.current
        if self.cfg.rts_cts:
            self.net.transmit(self.id, Frame.control(RTS, self.id, SINK, p.id, p.priority))
        else:
            self._send_data()

    def _send_data(self) -> None:
        p = self.state.current
        p.frames_sent += 1
        self.net.transmit(self.id, Frame(DATA, p.payload_len + HEADER_BYTES, self.id, SINK,
                                         p.id, p.priority, packet=p))

    def on_frame_sent(self, tx) -> None:
        kind = tx.frame.kind
        if kind == DATA:
            self.state.phase = "awaiting_ack"
            self._timer = self.sched.schedule(tx.end + self._ack_wait, self.id, "ack_timeout",
                                              self._timeout)
        elif kind == RTS:
            self.state.phase = "awaiting_cts"
            self._timer = self.sched.schedule(tx.end + self._cts_wait, self.id, "cts_timeout",
                                              self._timeout)

    def on_receive(self, frame: Frame) -> None:
        st = self.state
        if st.current is None or frame.packet_id != st.current.id:
            return
        if frame.kind == CTS and st.phase == "awaiting_cts":
            self.sched.cancel(self._timer)
            st.phase = "transmitting"
            self._send_data()
        elif frame.kind == ACK and st.phase == "awaiting_ack":
            self.sched.cancel(self._timer)
            p = st.current
            on_data_outcome(st, "ack_received", self.cfg.contention)
            dequeue(self.queues, p)
            self.net.deliver(p)
            self._start_next()

    def _timeout(self) -> None:
        st = self.state
        p = st.current
        verdict = on_data_outcome(st, "ack_timeout", self.cfg.contention)
        if verdict == "drop":
            dequeue(self.queues, p)
            self.net.mac_drop(p)
            self._start_next()
        else:
            if self.cfg.urgent_switch:
                head = select_next(self.queues)
                if head is not p:
                    st.current = head
                    st.retry_count = 0
            self._backoff()


class BopSink:
    """Acknowledges every intact DATA frame immediately (zero turnaround)."""

    def __init__(self, net) -> None:
        self.net = net
        self.id = SINK
        self.contending = False

    def on_receive(self, frame: Frame) -> None:
        if frame.kind == DATA:
            self.net.transmit(SINK, Frame.control(ACK, SINK, frame.src, frame.packet_id, frame.priority))
        elif frame.kind == RTS:
            self.net.transmit(SINK, Frame.control(CTS, SINK, frame.src, frame.packet_id, frame.priority))

    def on_frame_sent(self, tx) -> None:
        pass
