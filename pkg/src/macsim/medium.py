"""Shared half-duplex channel of a single-hop star.

Every station hears every other one. Airtime intervals are start-inclusive
and end-exclusive; a frame reaches its destination intact only if no other
transmission overlapped any part of it (no capture).
"""

from __future__ import annotations

from dataclasses import dataclass

from .kernel import US, SimulationFault

HEADER_BYTES = 6


class FrameKind:
    """Frame kind tags; plain strings keep per-frame dispatch cheap."""

    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    FRAG = "FRAG"
    ACK = "ACK"
    SACK = "SACK"
    NACK = "NACK"
    ACK_P_FRAG = "ACK_P_FRAG"
    ALL = (RTS, CTS, DATA, FRAG, ACK, SACK, NACK, ACK_P_FRAG)


RTS, CTS, DATA, FRAG = FrameKind.RTS, FrameKind.CTS, FrameKind.DATA, FrameKind.FRAG
ACK, SACK, NACK, ACK_P_FRAG = FrameKind.ACK, FrameKind.SACK, FrameKind.NACK, FrameKind.ACK_P_FRAG

FIXED_SIZES = {RTS: 5, CTS: 5, ACK: 5, SACK: 6, NACK: 6, ACK_P_FRAG: 8, DATA: 127}


@dataclass(frozen=True)
class PhyConfig:
    per_byte_time: int = 32 * US
    propagation_delay: int = 0

    def __post_init__(self) -> None:
        if self.per_byte_time <= 0:
            raise ValueError("per_byte_time must be positive")
        if self.propagation_delay != 0:
            raise ValueError("only zero propagation delay is modelled")

    def tx_duration(self, size_bytes: int) -> int:
        if size_bytes < 1:
            raise ValueError(f"frame size must be >= 1 byte, got {size_bytes}")
        return size_bytes * self.per_byte_time


class Frame:
    """One on-air unit.

    ``packet`` is a simulator-side reference to the carried application
    packet (not on the wire); ``info`` holds SACK/NACK/ACK_P_FRAG contents.
    ``more`` is the more-fragments bit of FRAG frames.
    """

    __slots__ = (
        "kind", "size_bytes", "src", "dst", "packet_id", "priority",
        "frag_index", "frag_total", "more", "packet", "info",
    )

    def __init__(self, kind, size_bytes, src, dst, packet_id, priority,
                 frag_index=None, frag_total=None, more=False, packet=None, info=None):
        if (frag_index is not None) != (kind == FRAG):
            raise ValueError("frag_index is required for FRAG frames and only for them")
        if kind == FRAG and not 0 <= frag_index < frag_total:
            raise ValueError(f"fragment index {frag_index} outside 0..{frag_total - 1}")
        fixed = FIXED_SIZES.get(kind)
        if fixed is not None and kind != DATA and size_bytes != fixed:
            raise ValueError(f"{kind} frames are {fixed} bytes, got {size_bytes}")
        self.kind = kind
        self.size_bytes = size_bytes
        self.src = src
        self.dst = dst
        self.packet_id = packet_id
        self.priority = priority
        self.frag_index = frag_index
        self.frag_total = frag_total
        self.more = more
        self.packet = packet
        self.info = info

    @classmethod
    def control(cls, kind, src, dst, packet_id, priority, info=None):
        return cls(kind, FIXED_SIZES[kind], src, dst, packet_id, priority, info=info)

    def __repr__(self) -> str:
        frag = f" {self.frag_index}/{self.frag_total}" if self.kind == FRAG else ""
        return f"<{self.kind}{frag} {self.src}->{self.dst} p{self.packet_id} {self.size_bytes}B>"


class Transmission:
    __slots__ = ("src", "frame", "start", "end", "destroyed")

    def __init__(self, src, frame, start, end):
        self.src = src
        self.frame = frame
        self.start = start
        self.end = end
        self.destroyed = False


class Medium:
    """Carrier sensing, airtime occupancy and collision bookkeeping.

    ``listener.on_tx_end(tx)`` is called when a transmission leaves the air,
    after the medium has forgotten it; ``tx.destroyed`` tells whether it
    collided. With ``keep_log`` every transmission is appended to ``log``.
    """

    def __init__(self, sched, phy: PhyConfig, listener, keep_log: bool = False) -> None:
        self.sched = sched
        self.phy = phy
        self.listener = listener
        self.active: list[Transmission] = []
        self.log: list[Transmission] | None = [] if keep_log else None
        self.transmitted: dict[str, int] = dict.fromkeys(FrameKind.ALL, 0)
        self.delivered: dict[str, int] = dict.fromkeys(FrameKind.ALL, 0)
        self.collisions: dict[int, int] = {}
        self.urgent_over_normal = 0
        self.overlap_violations = 0
        self._last_delivered_end = 0
        self._per_byte = phy.per_byte_time

    def tx_duration(self, size_bytes: int) -> int:
        return self.phy.tx_duration(size_bytes)

    @property
    def collision_in_progress(self) -> bool:
        return any(tx.destroyed for tx in self.active)

    def is_busy(self) -> bool:
        now = self.sched.now
        for tx in self.active:
            if tx.end > now:
                return True
        return False

    def sense(self, node=None) -> str:
        return "busy" if self.is_busy() else "idle"

    def busy_before(self) -> bool:
        """True if a frame that started strictly before now is still on air.

        A station whose sensing slot ends at ``now`` cannot have heard a frame
        that starts at ``now`` itself; this is how equal backoff draws collide.
        """
        now = self.sched.now
        for tx in self.active:
            if tx.start < now < tx.end:
                return True
        return False

    def transmitting(self, src) -> bool:
        return any(tx.src == src for tx in self.active)

    def begin_transmission(self, src, frame: Frame) -> Transmission:
        sched = self.sched
        now = sched.now
        for tx in self.active:
            if tx.src == src:
                raise SimulationFault(f"node {src} started {frame!r} while still sending {tx.frame!r}")
        end = now + frame.size_bytes * self._per_byte
        new = Transmission(src, frame, now, end)
        urgent = frame.priority == 0
        for tx in self.active:
            if tx.end <= now:
                continue
            if urgent and tx.start < now and tx.frame.priority != 0 and tx.frame.kind in (DATA, FRAG):
                self.urgent_over_normal += 1
            if not tx.destroyed:
                tx.destroyed = True
                self._count_collision(tx.frame)
            if not new.destroyed:
                new.destroyed = True
                self._count_collision(frame)
        self.active.append(new)
        self.transmitted[frame.kind] += 1
        if self.log is not None:
            self.log.append(new)
        sched.schedule(end, "medium", "frame_end", self._end, (new,))
        return new

    def account_unobserved(self, kind: str, n: int, start: int, end: int) -> None:
        """Count ``n`` collision-free back-to-back frames spanning ``start..end``
        whose airtime the event loop skipped."""
        if start < self._last_delivered_end or self.active:
            raise SimulationFault(f"skipped {kind} frames at {start} overlap other traffic")
        self.transmitted[kind] += n
        self.delivered[kind] += n
        self._last_delivered_end = end

    def _count_collision(self, frame: Frame) -> None:
        self.collisions[frame.priority] = self.collisions.get(frame.priority, 0) + 1

    def _end(self, tx: Transmission) -> None:
        self.active.remove(tx)
        if not tx.destroyed:
            self.delivered[tx.frame.kind] += 1
            if tx.start < self._last_delivered_end:
                self.overlap_violations += 1
            self._last_delivered_end = tx.end
        self.listener.on_tx_end(tx)
