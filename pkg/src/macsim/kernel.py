"""Discrete-event core: integer-nanosecond clock, event queue, seeded RNG streams.

The scheduler and the burst-skip kernel come from the compiled ``_ckernel``
extension when it is available, otherwise from the pure-Python ``_pykernel``.
Set ``MACSIM_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import math
import os
import random
from decimal import Decimal
from typing import Callable, TextIO

import numpy as np

from . import _pykernel
from ._pykernel import Event, SimulationFault
from ._pykernel import Scheduler as PyScheduler

try:
    if os.environ.get("MACSIM_PURE"):
        raise ImportError("pure-Python kernel forced by MACSIM_PURE")
    from . import _ckernel
except ImportError:
    _ckernel = None

CScheduler = _ckernel.Scheduler if _ckernel is not None else None
COMPILED = _ckernel is not None
Scheduler = CScheduler if COMPILED else PyScheduler
skip_fragments = _ckernel.skip_fragments if COMPILED else _pykernel.skip_fragments

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000

PRNG_NAME = "MT19937 (random.Random) seeded from numpy SeedSequence(master_seed, spawn_key=(stream_id,))"

__all__ = [
    "COMPILED",
    "Event",
    "MS",
    "NS",
    "PRNG_NAME",
    "RngStream",
    "S",
    "Scheduler",
    "SimulationFault",
    "TraceWriter",
    "US",
    "make_scheduler",
    "parse_duration",
    "skip_fragments",
]


def make_scheduler(pure: bool = False):
    """Return a fresh scheduler; ``pure=True`` forces the Python implementation."""
    return PyScheduler() if pure or CScheduler is None else CScheduler()


_UNITS = {"ns": 1, "us": US, "µs": US, "μs": US, "ms": MS, "s": S, "sec": S}


def parse_duration(text: str | int | float) -> int:
    """Parse ``'200ms'``, ``'0.6 ms'``, ``'32us'``, ``'1000'`` (seconds) to ns.

    Decimal arithmetic keeps values like 0.6 ms exact; a result that is not a
    whole number of nanoseconds is rejected.
    """
    if isinstance(text, int):
        return text * S
    s = str(text).strip().lower()
    unit = "s"
    for suffix in sorted(_UNITS, key=len, reverse=True):
        if s.endswith(suffix):
            unit, s = suffix, s[: -len(suffix)].strip()
            break
    try:
        value = Decimal(s) * _UNITS[unit]
    except ArithmeticError as exc:
        raise ValueError(f"not a duration: {text!r}") from exc
    if value != value.to_integral_value():
        raise ValueError(f"duration {text!r} is not a whole number of nanoseconds")
    return int(value)


class RngStream:
    """One independent pseudo-random stream per (node, purpose).

    Streams derive from the master seed through ``SeedSequence`` spawn keys,
    so distinct ``stream_id`` values give independent substreams. Draws use
    Python's Mersenne Twister, whose output is identical across platforms.
    """

    __slots__ = ("master_seed", "stream_id", "_rng", "random", "randint")

    def __init__(self, master_seed: int, stream_id: int) -> None:
        self.master_seed = master_seed
        self.stream_id = stream_id
        state = np.random.SeedSequence(master_seed, spawn_key=(stream_id,)).generate_state(4)
        self._rng = random.Random(int.from_bytes(state.tobytes(), "little"))
        self.random = self._rng.random
        self.randint = self._rng.randint

    def exponential_ns(self, mean_ns: int) -> int:
        return exponential_from_uniform(self._rng.random(), mean_ns)


_U_MAX = 1.0 - 2.0**-53


def exponential_from_uniform(u: float, mean_ns: int) -> int:
    """Inverse-CDF exponential sample, rounded to a positive integer ns.

    ``u`` is clamped below 1 so the log stays finite.
    """
    u = min(max(u, 0.0), _U_MAX)
    return max(1, round(-mean_ns * math.log1p(-u)))


class TraceWriter:
    """Writes ``time_ns,seq,target,action`` for every dispatched event."""

    header = "time_ns,seq,target,action\n"

    def __init__(self, out: TextIO | Callable[[str], object]) -> None:
        self._write = out.write if hasattr(out, "write") else out
        self._write(self.header)

    def __call__(self, ev: Event) -> None:
        self._write(f"{ev[0]},{ev[1]},{ev[2]},{ev[3]}\n")
