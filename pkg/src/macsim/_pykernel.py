"""Pure-Python hot kernels: the event scheduler and the burst skip.

Reference implementation. ``macsim.kernel`` imports the compiled ``_ckernel``
extension when it has been built and falls back to this module otherwise;
both expose ``Scheduler`` and ``skip_fragments`` and must behave identically.
"""

from __future__ import annotations

from heapq import heappop, heappush


class SimulationFault(RuntimeError):
    """Raised for protocol-logic or scheduling faults that must halt a run."""


class Event(list):
    """Heap entry ``[fire_time, seq, target, action, fn, args]``.

    A list subclass so heap comparisons stay in C; ``(fire_time, seq)`` is
    unique, so comparison never reaches the callback slots. Cancellation
    clears ``fn`` (lazy tombstone).
    """

    __slots__ = ()

    @property
    def fire_time(self) -> int:
        return self[0]

    @property
    def seq(self) -> int:
        return self[1]

    @property
    def target(self):
        return self[2]

    @property
    def action(self) -> str:
        return self[3]

    @property
    def cancelled(self) -> bool:
        return self[4] is None


class Scheduler:
    """Virtual clock plus a (fire_time, seq)-ordered pending set."""

    compiled = False

    def __init__(self) -> None:
        self.now = 0
        self.dispatched = 0
        self._seq = 0
        self._heap: list[Event] = []
        self.trace = None

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, fire_time: int, target, action: str, fn, args=()) -> Event:
        if fire_time < self.now:
            raise SimulationFault(
                f"event {action!r} for {target!r} scheduled at {fire_time} ns, "
                f"before the clock ({self.now} ns)"
            )
        ev = Event((fire_time, self._seq, target, action, fn, args))
        self._seq += 1
        heappush(self._heap, ev)
        return ev

    def cancel(self, ev: Event) -> None:
        ev[4] = None

    def peek_time(self):
        """Fire time of the earliest live event, or None."""
        heap = self._heap
        while heap and heap[0][4] is None:
            heappop(heap)
        return heap[0][0] if heap else None

    def pop_next(self) -> Event:
        """Remove and return the earliest live event, advancing the clock.

        Raises IndexError when nothing is pending (end of run).
        """
        heap = self._heap
        while True:
            ev = heappop(heap)
            if ev[4] is not None:
                self.now = ev[0]
                return ev

    def run_until(self, end: int) -> int:
        if end < self.now:
            raise SimulationFault(f"run_until({end}) is before the clock ({self.now})")
        heap = self._heap
        trace = self.trace
        count = 0
        while heap:
            ev = heap[0]
            if ev[0] > end:
                break
            heappop(heap)
            fn = ev[4]
            if fn is None:
                continue
            self.now = ev[0]
            if trace is not None:
                trace(ev)
            fn(*ev[5])
            count += 1
        self.now = end
        self.dispatched += count
        return count


def skip_fragments(acked_mask, start: int, pause_end: int, step: int, limit: int) -> list[int]:
    """Fragments of a burst that can be sent without any other event intervening.

    Candidates are the unconfirmed indices from ``start`` on, except the last
    one (the burst must end with a real frame). The j-th candidate (1-based)
    and the pause after it finish at ``pause_end + j * step``, which has to be
    strictly before ``limit``.
    """
    if limit <= pause_end + step:
        return []
    room = (limit - 1 - pause_end) // step
    out = []
    for i in range(start, len(acked_mask)):
        if not acked_mask[i]:
            out.append(i)
            if len(out) > room:
                break
    # the last candidate collected is either beyond ``room`` or the burst's final frame
    return out[:-1]
