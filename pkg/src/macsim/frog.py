"""FROG-MAC: fragmented normal traffic with interruptible pauses.

A normal packet wins the channel with RTS/CTS and is then sent as a burst of
fragments. Each fragment is followed by a listening pause of ``t_int``; an
urgent station may claim the channel inside that pause with its own RTS, and
the interrupted sender later re-contends and continues where it stopped.
Urgent packets are never fragmented.

The sink acknowledges whole urgent packets with ACK, completed fragment sets
with SACK, incomplete ones with NACK, and confirms what it holds of an
interrupted packet with ACK_P_FRAG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .contention import ContentionConfig, Contender, draw_backoff
from .kernel import US, SimulationFault, skip_fragments
from .medium import ACK, ACK_P_FRAG, CTS, DATA, FRAG, HEADER_BYTES, NACK, RTS, SACK, Frame
from .traffic import MAX_PAYLOAD, NodeQueues, Packet, Priority, dequeue, enqueue, select_next

SINK = 0
NACK_BITMAP_FRAGMENTS = 48  # 6-byte NACK


@dataclass(frozen=True)
class FrogConfig:
    fragment_payload: int = 16
    t_int: int = 600 * US
    frag_header: int = HEADER_BYTES
    contention: ContentionConfig = field(default_factory=ContentionConfig)
    urgent_switch: bool = True
    # re-contend after being interrupted instead of resuming silently
    recontend_after_interrupt: bool = True

    def __post_init__(self) -> None:
        if not 2 <= self.fragment_payload <= MAX_PAYLOAD:
            raise ValueError(f"fragment_payload must be in 2..{MAX_PAYLOAD}, got {self.fragment_payload}")
        if self.t_int <= 0:
            raise ValueError("t_int must be positive")


def fragment_count(payload_len: int, fragment_payload: int) -> int:
    if fragment_payload < 1:
        raise ValueError(f"fragment payload must be >= 1 byte, got {fragment_payload}")
    if payload_len < 1:
        raise ValueError(f"payload length must be >= 1 byte, got {payload_len}")
    return -(-payload_len // fragment_payload)


def frag_frame_size(fragment_payload: int, is_last: bool, payload_len: int = MAX_PAYLOAD,
                    header: int = HEADER_BYTES) -> int:
    """On-air bytes of one fragment; the last one carries the remainder."""
    if is_last:
        tail = payload_len % fragment_payload
        return (tail or fragment_payload) + header
    return fragment_payload + header


def split_payload(data: bytes, fragment_payload: int) -> list[bytes]:
    fragment_count(len(data), fragment_payload)
    return [data[i:i + fragment_payload] for i in range(0, len(data), fragment_payload)]


class FragmentPlan:
    """Sender-side progress through one fragmented packet.

    ``next_index`` is the send cursor; ``acked_mask`` holds what the sink has
    confirmed (via NACK or ACK_P_FRAG). Fragments the sink already holds are
    skipped when the cursor passes them.
    """

    __slots__ = ("packet_id", "total", "next_index", "acked_mask", "last_sent")

    def __init__(self, packet_id: int, total: int) -> None:
        self.packet_id = packet_id
        self.total = total
        self.next_index = 0
        self.acked_mask = [False] * total
        self.last_sent = None

    def next_to_send(self) -> int | None:
        mask = self.acked_mask
        for i in range(self.next_index, self.total):
            if not mask[i]:
                return i
        return None

    def more_after(self, index: int) -> bool:
        mask = self.acked_mask
        for i in range(index + 1, self.total):
            if not mask[i]:
                return True
        return False

    def confirm(self, received) -> None:
        for i in received:
            self.acked_mask[i] = True

    def lowest_missing(self) -> int | None:
        for i, ok in enumerate(self.acked_mask):
            if not ok:
                return i
        return None


class NackInfo(NamedTuple):
    """NACK contents: a missing-index list when it fits the 48-bit bitmap,
    otherwise only the index to resend from."""

    missing: tuple[int, ...] | None
    resend_from: int


class _Reassembly:
    __slots__ = ("total", "chunks", "first_at", "completed_at")

    def __init__(self, total: int, now: int) -> None:
        self.total = total
        self.chunks: dict[int, bytes | None] = {}
        self.first_at = now
        self.completed_at = None


class SinkReassembly:
    """Fragment sets held by the sink, keyed by ``(src, packet_id)``."""

    def __init__(self) -> None:
        self.entries: dict[tuple[int, int], _Reassembly] = {}

    def add(self, src: int, packet_id: int, index: int, total: int, now: int,
            chunk: bytes | None = None) -> bool:
        """Store one fragment; duplicates are ignored. Returns True if new."""
        entry = self.entries.get((src, packet_id))
        if entry is None:
            entry = self.entries[(src, packet_id)] = _Reassembly(total, now)
        elif entry.total != total:
            raise SimulationFault(f"fragment total changed for packet {packet_id} of node {src}")
        if index in entry.chunks:
            return False
        entry.chunks[index] = chunk
        if len(entry.chunks) == entry.total:
            entry.completed_at = now
        return True

    def add_many(self, src: int, packet_id: int, indices, total: int, first_at: int, step: int) -> None:
        """``add`` for fragments received at ``first_at``, ``first_at + step``, ..."""
        entry = self.entries.get((src, packet_id))
        if entry is None:
            entry = self.entries[(src, packet_id)] = _Reassembly(total, first_at)
        elif entry.total != total:
            raise SimulationFault(f"fragment total changed for packet {packet_id} of node {src}")
        chunks = entry.chunks
        last_new = -1
        for j, index in enumerate(indices):
            if index not in chunks:
                chunks[index] = None
                last_new = j
        if last_new >= 0 and len(chunks) == total:
            entry.completed_at = first_at + last_new * step

    def received(self, src: int, packet_id: int) -> frozenset[int]:
        entry = self.entries.get((src, packet_id))
        return frozenset(entry.chunks) if entry else frozenset()

    def missing(self, src: int, packet_id: int) -> list[int]:
        entry = self.entries[(src, packet_id)]
        return [i for i in range(entry.total) if i not in entry.chunks]

    def is_complete(self, src: int, packet_id: int) -> bool:
        entry = self.entries.get((src, packet_id))
        return entry is not None and entry.completed_at is not None

    def completion_time(self, src: int, packet_id: int) -> int | None:
        entry = self.entries.get((src, packet_id))
        return None if entry is None else entry.completed_at

    def forget(self, src: int, packet_id: int) -> None:
        """Drop stored chunks of a finished packet, keeping its completion mark."""
        entry = self.entries.get((src, packet_id))
        if entry is not None and entry.completed_at is not None:
            entry.chunks = dict.fromkeys(entry.chunks)


def reassemble(r: SinkReassembly, src: int, packet_id: int) -> bytes | None:
    """The original payload if every fragment (with data) is held, else None."""
    entry = r.entries.get((src, packet_id))
    if entry is None or entry.completed_at is None:
        return None
    parts = [entry.chunks[i] for i in range(entry.total)]
    if any(part is None for part in parts):
        return None
    return b"".join(parts)


class FrogNode(Contender):
    """A FROG-MAC source station (the sender state machine)."""

    def __init__(self, net, node_id: int, cfg: FrogConfig, queues: NodeQueues, rng) -> None:
        super().__init__(net, node_id, cfg.contention.slot_time)
        self.cfg = cfg
        self.queues = queues
        self.rng = rng
        self.phase = "idle"
        self.current: Packet | None = None
        self.plan: FragmentPlan | None = None
        self.pause_eligible = False
        self._pause_attempt = False
        self._timer = None
        self._pause_timer = None
        self._pause_rts = None
        phy = net.medium.phy
        slot = cfg.contention.slot_time
        self._rts_time = phy.tx_duration(5)
        self._cts_wait = phy.tx_duration(5) + 2 * slot
        self._ack_wait = phy.tx_duration(5) + 2 * slot
        self._sack_wait = phy.tx_duration(6) + 2 * slot

    # -- queueing ---------------------------------------------------------

    def on_arrival(self, p: Packet) -> None:
        if not enqueue(self.queues, p):
            self.net.queue_drop(p)
            return
        if self.phase == "idle":
            self._start_next()
        elif p.priority == Priority.URGENT:
            cur = self.current
            if (self.cfg.urgent_switch and self.phase == "backoff"
                    and cur.priority != Priority.URGENT):
                self._select(p)
                self._backoff()
            self.try_pause_access()

    def _select(self, p: Packet) -> None:
        # a packet that lost a pause collision waits for ordinary contention
        if p.priority == Priority.URGENT:
            if p is not self.current:
                self.pause_eligible = True
        elif self.plan is None or self.plan.packet_id != p.id:
            self.plan = FragmentPlan(p.id, fragment_count(p.payload_len, self.cfg.fragment_payload))
        self.current = p

    def _start_next(self) -> None:
        p = select_next(self.queues)
        if p is None:
            self.phase = "idle"
            self.current = None
            return
        self._select(p)
        self._backoff()

    def _backoff(self) -> None:
        self.phase = "backoff"
        slots = draw_backoff(self.cfg.contention, self.current.priority, self.rng)
        self.current.backoff_draws.append(slots)
        self.contend(slots)
        self.try_pause_access()

    def _finish(self, p: Packet, outcome: str) -> None:
        """Retire ``p``: ``"ack"`` delivers it, ``"sack"`` means the sink already
        recorded it, ``"drop"`` abandons it."""
        fifo = self.queues.fifos[p.priority]
        if not fifo or fifo[0] is not p:
            raise SimulationFault(f"node {self.id}: finished packet {p.id} is not at the queue head")
        dequeue(self.queues, p)
        if p.priority != Priority.URGENT:
            self.plan = None
        if outcome == "ack":
            self.net.deliver(p)
        elif outcome == "drop":
            self.net.mac_drop(p)
        self._start_next()

    def _fail(self) -> None:
        """One failed exchange for the current packet: retry or abandon."""
        p = self.current
        p.retries += 1
        if p.retries > self.cfg.contention.max_retries:
            self._finish(p, "drop")
        else:
            if self.cfg.urgent_switch:
                self._select(select_next(self.queues))
            self._backoff()

    # -- channel access ---------------------------------------------------

    def access_channel(self) -> None:
        self._send_rts()

    def _send_rts(self) -> None:
        p = self.current
        self.phase = "tx"
        self.net.transmit(self.id, Frame.control(RTS, self.id, SINK, p.id, p.priority))

    def try_pause_access(self) -> None:
        """Schedule an urgent RTS into the current interruptible pause, if allowed."""
        net = self.net
        if net.pause_end is None or self._pause_rts is not None:
            return
        if not self._may_interrupt():
            return
        start = self.sched.now + self.slot_time
        if start + self._rts_time < net.pause_end:
            self._pause_rts = self.sched.schedule(start, self.id, "pause_rts", self._pause_rts_due)

    def _may_interrupt(self) -> bool:
        if self.net.burst_owner is self:
            return self.phase == "pause" and bool(self.queues.urgent_fifo)
        return (self.phase == "backoff" and self.current.priority == Priority.URGENT
                and self.pause_eligible)

    def _pause_rts_due(self) -> None:
        self._pause_rts = None
        net = self.net
        if (net.pause_end is None or self.sched.now + self._rts_time >= net.pause_end
                or net.medium.busy_before() or not self._may_interrupt()):
            return
        if net.burst_owner is self:
            self.sched.cancel(self._pause_timer)
            self._pause_timer = None
            self._select(self.queues.urgent_fifo[0])
        else:
            self.stop_contending()
        self._pause_attempt = True
        self._send_rts()

    # -- burst ------------------------------------------------------------

    def _send_fragment(self) -> None:
        p, plan, cfg = self.current, self.plan, self.cfg
        i = plan.next_to_send()
        if i is None:
            raise SimulationFault(f"node {self.id}: no fragment left to send for packet {p.id}")
        more = plan.more_after(i)
        plan.next_index = i + 1
        plan.last_sent = i
        size = frag_frame_size(cfg.fragment_payload, i == plan.total - 1, p.payload_len, cfg.frag_header)
        p.frames_sent += 1
        self.phase = "tx"
        self.net.transmit(self.id, Frame(FRAG, size, self.id, SINK, p.id, p.priority,
                                         frag_index=i, frag_total=plan.total, more=more, packet=p))

    def _coalesce(self, pause_end: int) -> int:
        """Fast-forward through fragments nothing else can observe.

        With no urgent packet queued anywhere, nobody may use a pause, so a
        fragment and the pause after it change no other state as long as no
        other event falls inside them. Such fragments are accounted for in
        one step; returns the end of the pause that is left to run for real.
        """
        p, plan, cfg = self.current, self.plan, self.cfg
        net = self.net
        limit = self.sched.peek_time()
        limit = net.end + 1 if limit is None else min(limit, net.end + 1)
        airtime = net.medium.phy.tx_duration(cfg.fragment_payload + cfg.frag_header)
        step = airtime + cfg.t_int
        skipped = skip_fragments(plan.acked_mask, plan.next_index, pause_end, step, limit)
        if not skipped:
            return pause_end
        k = len(skipped)
        plan.next_index = skipped[-1] + 1
        plan.last_sent = skipped[-1]
        p.frames_sent += k
        net.silent_fragments(self, p, skipped, plan.total, pause_end, step, airtime)
        return pause_end + k * step

    def _pause_over(self) -> None:
        self._pause_timer = None
        self.net.end_pause()
        self._send_fragment()

    def on_preempted(self) -> None:
        """The sink granted an urgent RTS inside this station's pause."""
        if self._pause_timer is not None:
            self.sched.cancel(self._pause_timer)
            self._pause_timer = None
        if self.phase == "pause":
            if self.cfg.recontend_after_interrupt:
                self._start_next()
            else:
                self.phase = "suspended"

    def on_channel_released(self) -> None:
        if self.phase == "suspended":
            self.phase = "tx"
            self.net.start_burst(self)
            self._send_fragment()

    # -- medium callbacks -------------------------------------------------

    def on_frame_sent(self, tx) -> None:
        frame = tx.frame
        kind = frame.kind
        sched = self.sched
        if kind == FRAG:
            if frame.more:
                self.phase = "pause"
                end = tx.end + self.cfg.t_int
                if self.net.coalesce and not self.net.census[Priority.URGENT]:
                    end = self._coalesce(end)
                self._pause_timer = sched.schedule(end, self.id, "t_int_expired", self._pause_over)
                self.net.begin_pause(self, end)
            else:
                self.phase = "wait_sack"
                self._timer = sched.schedule(tx.end + self._sack_wait, self.id, "sack_timeout",
                                             self._sack_timeout)
        elif kind == RTS:
            self.phase = "wait_cts"
            self._timer = sched.schedule(tx.end + self._cts_wait, self.id, "cts_timeout",
                                         self._exchange_timeout)
        elif kind == DATA:
            self.phase = "wait_ack"
            self._timer = sched.schedule(tx.end + self._ack_wait, self.id, "ack_timeout",
                                         self._exchange_timeout)

    def on_receive(self, frame: Frame) -> None:
        kind = frame.kind
        if kind == ACK_P_FRAG:
            if self.plan is not None and self.plan.packet_id == frame.packet_id:
                self.plan.confirm(frame.info)
            return
        p = self.current
        if p is None or frame.packet_id != p.id:
            return
        phase = self.phase
        if kind == CTS and phase == "wait_cts":
            self.sched.cancel(self._timer)
            self._pause_attempt = False
            if p.priority == Priority.URGENT:
                self.phase = "tx"
                p.frames_sent += 1
                self.net.transmit(self.id, Frame(DATA, p.payload_len + HEADER_BYTES, self.id, SINK,
                                                 p.id, p.priority, packet=p))
            else:
                self._send_fragment()
        elif kind == ACK and phase == "wait_ack":
            self.sched.cancel(self._timer)
            self._finish(p, "ack")
        elif kind == SACK and phase == "wait_sack":
            self.sched.cancel(self._timer)
            self._finish(p, "sack")
        elif kind == NACK and phase == "wait_sack":
            self.sched.cancel(self._timer)
            info: NackInfo = frame.info
            plan = self.plan
            if info.missing is not None:
                plan.confirm(i for i in range(plan.total) if i not in info.missing)
            plan.next_index = info.resend_from
            p.retries += 1
            if p.retries > self.cfg.contention.max_retries:
                self.net.clear_burst()
                self._finish(p, "drop")
            else:
                self._send_fragment()

    def _exchange_timeout(self) -> None:
        self._timer = None
        if self._pause_attempt:
            self._pause_attempt = False
            self.pause_eligible = False
        if self.net.burst_owner is self:
            self.net.clear_burst()
        self._fail()

    def _sack_timeout(self) -> None:
        self._timer = None
        self.net.clear_burst()
        # resend the final fragment to ask for a fresh SACK/NACK
        self.plan.next_index = self.plan.last_sent
        self._fail()


class FrogSink:
    """Sink side: grants RTS, reassembles fragments, differentiated ACKs."""

    def __init__(self, net, cfg: FrogConfig) -> None:
        self.net = net
        self.cfg = cfg
        self.id = SINK
        self.contending = False
        self.reassembly = SinkReassembly()
        self._burst: tuple[int, int] | None = None
        self._interrupted: tuple[int, int] | None = None
        self._apf_due = False

    def _reply(self, kind, frame: Frame, info=None) -> None:
        self.net.transmit(SINK, Frame.control(kind, SINK, frame.src, frame.packet_id, frame.priority, info))

    def on_receive(self, frame: Frame) -> None:
        net = self.net
        kind = frame.kind
        if kind == RTS:
            if net.burst_owner is None:
                self._interrupted = None
                self._reply(CTS, frame)
                if frame.priority != Priority.URGENT:
                    self._burst = (frame.src, frame.packet_id)
                    net.start_burst(net.nodes[frame.src])
            elif (frame.priority == Priority.URGENT and net.pause_end is not None
                  and net.sched.now < net.pause_end):
                self._interrupted = self._burst
                self._reply(CTS, frame)
                net.preempt_burst()
        elif kind == DATA:
            self._reply(ACK, frame)
            self._apf_due = self._interrupted is not None
        elif kind == FRAG:
            r = self.reassembly
            src, pid = frame.src, frame.packet_id
            self._burst = (src, pid)
            r.add(src, pid, frame.frag_index, frame.frag_total, net.sched.now)
            if frame.more:
                return
            if r.is_complete(src, pid):
                if frame.packet.delivered_at is None:
                    net.deliver(frame.packet)
                    r.forget(src, pid)
                self._reply(SACK, frame)
            else:
                missing = r.missing(src, pid)
                if frame.frag_total <= NACK_BITMAP_FRAGMENTS:
                    info = NackInfo(tuple(missing), missing[0])
                else:
                    info = NackInfo(None, missing[0])
                self._reply(NACK, frame, info)

    def absorb_fragments(self, src: int, pid: int, indices, total: int, first_end: int, step: int) -> None:
        """Receive fragments (none of them final) outside the event loop;
        fragment ``j`` of ``indices`` ended at ``first_end + j * step``."""
        self._burst = (src, pid)
        self.reassembly.add_many(src, pid, indices, total, first_end, step)

    def on_frame_sent(self, tx) -> None:
        kind = tx.frame.kind
        if kind == ACK and self._apf_due:
            self._apf_due = False
            src, pid = self._interrupted
            self._interrupted = None
            info = self.reassembly.received(src, pid)
            self.net.transmit(SINK, Frame.control(ACK_P_FRAG, SINK, src, pid, Priority.NORMAL, info))
        elif kind == SACK:
            self._burst = None
            self.net.clear_burst()
