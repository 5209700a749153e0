# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels, a drop-in for ``_pykernel``.

The pending set is a binary heap of C structs keyed on ``(fire_time, seq)``,
each holding a strong reference to its ``Event`` list, so ordering never
touches Python comparison. Events, tombstone cancellation and the trace hook
behave exactly as in the pure-Python scheduler.
"""

from cpython.ref cimport PyObject, Py_INCREF, Py_DECREF
from libc.stdlib cimport malloc, realloc, free

from ._pykernel import Event, SimulationFault


cdef struct Entry:
    long long time
    long long seq
    PyObject* ev


cdef inline bint _before(Entry* a, Entry* b) nogil:
    return a.time < b.time or (a.time == b.time and a.seq < b.seq)


cdef class Scheduler:
    """Virtual clock plus a (fire_time, seq)-ordered pending set."""

    cdef Entry* _heap
    cdef Py_ssize_t _size
    cdef Py_ssize_t _cap
    cdef long long _seq
    cdef long long _last_time
    cdef long long _now
    cdef readonly object now
    cdef public long long dispatched
    cdef public object trace

    compiled = True

    def __cinit__(self):
        self._cap = 1024
        self._heap = <Entry*> malloc(self._cap * sizeof(Entry))
        if self._heap == NULL:
            raise MemoryError()
        self._size = 0
        self._seq = 0
        self._now = 0
        self.now = 0
        self.dispatched = 0
        self.trace = None

    def __dealloc__(self):
        cdef Py_ssize_t i
        if self._heap != NULL:
            for i in range(self._size):
                Py_DECREF(<object> self._heap[i].ev)
            free(self._heap)

    def __len__(self):
        return self._size

    cdef void _push(self, long long t, long long seq, object ev) except *:
        cdef Py_ssize_t i, parent
        cdef Entry item
        cdef Entry* grown
        if self._size == self._cap:
            grown = <Entry*> realloc(self._heap, 2 * self._cap * sizeof(Entry))
            if grown == NULL:
                raise MemoryError()
            self._heap = grown
            self._cap *= 2
        Py_INCREF(ev)
        item.time = t
        item.seq = seq
        item.ev = <PyObject*> ev
        i = self._size
        self._size += 1
        while i > 0:
            parent = (i - 1) >> 1
            if _before(&item, &self._heap[parent]):
                self._heap[i] = self._heap[parent]
                i = parent
            else:
                break
        self._heap[i] = item

    cdef object _pop(self):
        # caller guarantees a non-empty heap; returns the owned reference
        cdef Entry top = self._heap[0]
        cdef Entry last
        cdef Py_ssize_t i, child, n
        self._last_time = top.time
        self._size -= 1
        n = self._size
        if n > 0:
            last = self._heap[n]
            i = 0
            while True:
                child = 2 * i + 1
                if child >= n:
                    break
                if child + 1 < n and _before(&self._heap[child + 1], &self._heap[child]):
                    child += 1
                if _before(&self._heap[child], &last):
                    self._heap[i] = self._heap[child]
                    i = child
                else:
                    break
            self._heap[i] = last
        ev = <object> top.ev
        Py_DECREF(ev)
        return ev

    cdef inline bint _top_dead(self):
        return (<list> self._heap[0].ev)[4] is None

    def schedule(self, long long fire_time, target, str action, fn, args=()):
        if fire_time < self._now:
            raise SimulationFault(
                f"event {action!r} for {target!r} scheduled at {fire_time} ns, "
                f"before the clock ({self.now} ns)"
            )
        ev = Event((fire_time, self._seq, target, action, fn, args))
        self._push(fire_time, self._seq, ev)
        self._seq += 1
        return ev

    def cancel(self, ev):
        ev[4] = None

    def peek_time(self):
        """Fire time of the earliest live event, or None."""
        while self._size and self._top_dead():
            self._pop()
        return self._heap[0].time if self._size else None

    def pop_next(self):
        """Remove and return the earliest live event, advancing the clock.

        Raises IndexError when nothing is pending (end of run).
        """
        cdef object ev
        while self._size:
            ev = self._pop()
            if (<list> ev)[4] is not None:
                self._now = self._last_time
                self.now = (<list> ev)[0]
                return ev
        raise IndexError("pop from an empty scheduler")

    def run_until(self, long long end):
        cdef long long count = 0
        cdef object ev
        cdef list item
        if end < self._now:
            raise SimulationFault(f"run_until({end}) is before the clock ({self.now})")
        trace = self.trace
        while self._size:
            if self._heap[0].time > end:
                break
            ev = self._pop()
            item = <list> ev
            fn = item[4]
            if fn is None:
                continue
            self._now = self._last_time
            self.now = item[0]
            if trace is not None:
                trace(ev)
            fn(*item[5])
            count += 1
        self._now = end
        self.now = end
        self.dispatched += count
        return count


def skip_fragments(list acked_mask, long long start, long long pause_end, long long step, long long limit):
    """Fragments of a burst that can be sent without any other event intervening.

    Same contract as the pure-Python version.
    """
    cdef long long room
    cdef Py_ssize_t i, n = len(acked_mask)
    cdef list out = []
    if limit <= pause_end + step:
        return out
    room = (limit - 1 - pause_end) // step
    for i in range(start, n):
        if not acked_mask[i]:
            out.append(i)
            if len(out) > room:
                break
    return out[:-1]
