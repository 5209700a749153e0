"""Compare the compiled and pure-Python scheduler kernels.

    python benchmarks/bench_kernel.py [--events N] [--seconds S]

Runs a raw schedule/dispatch microbenchmark and one end-to-end simulation
per protocol with each kernel, and prints wall-clock times and speedups.
"""

import argparse
import random
import time

from macsim import _pykernel, kernel
from macsim.kernel import S
from macsim.network import Network, RunConfig


def _best(fn, repeat=3):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def scheduler_micro(cls, n):
    rng = random.Random(1)
    times = [rng.randrange(10**9) for _ in range(n)]

    def work():
        s = cls()
        noop = int
        for i, t in enumerate(times):
            ev = s.schedule(t, 0, "x", noop)
            if i % 5 == 0:
                s.cancel(ev)
        s.run_until(10**9)

    return _best(work)


def skip_micro(fn, n):
    mask = [False] * 61

    def work():
        for i in range(n):
            fn(mask, i % 60, 0, 856_000, 50_000_000)

    return _best(work)


def end_to_end(protocol, seconds, pure, frag=16):
    cfg = RunConfig(protocol=protocol, node_count=11, fragment_payload=frag, duration=seconds * S)
    return _best(lambda: Network(cfg, 42, pure=pure).run(), repeat=1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--seconds", type=int, default=200, help="simulated seconds per end-to-end run")
    args = ap.parse_args()
    if not kernel.COMPILED:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    from macsim import _ckernel

    rows = [
        (f"scheduler, {args.events} events",
         scheduler_micro(_pykernel.Scheduler, args.events), scheduler_micro(_ckernel.Scheduler, args.events)),
        ("skip_fragments x 20000", skip_micro(_pykernel.skip_fragments, 20_000),
         skip_micro(_ckernel.skip_fragments, 20_000)),
    ]
    for protocol, frag in (("bop", 16), ("frog", 16), ("frog", 2)):
        label = f"{protocol}{frag if protocol == 'frog' else ''} n=11, {args.seconds} s"
        rows.append((label, end_to_end(protocol, args.seconds, True, frag),
                     end_to_end(protocol, args.seconds, False, frag)))
    print(f"{'case':<34}{'pure s':>10}{'compiled s':>12}{'speedup':>9}")
    for label, pure, comp in rows:
        print(f"{label:<34}{pure:>10.3f}{comp:>12.3f}{pure / comp:>8.2f}x")


if __name__ == "__main__":
    main()
