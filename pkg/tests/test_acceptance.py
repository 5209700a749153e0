"""Acceptance criteria at full settings (1000 s runs, 5 replications, n = 2..11).

Each test records one PASS/FAIL line, printed in the pytest terminal summary.
The two full sweeps take several minutes on one core.
"""

import bisect
import math
import subprocess
import sys
import time

import pytest

from conftest import ACCEPTANCE_LINES, build, normal_only
from macsim.experiment import FIGURE_FRAGMENTS, ExperimentConfig, run_checks, sweep_figures
from macsim.frog import fragment_count
from macsim.kernel import MS, S, US, RngStream
from macsim.medium import DATA, FRAG, RTS, SACK
from macsim.metrics import ci95
from macsim.traffic import URGENT_POISSON, first_arrival, next_arrival

SWEEP_BUDGET_S = 600


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("figures_run1")
    t0 = time.perf_counter()
    result = sweep_figures(out, ExperimentConfig())
    result.elapsed = time.perf_counter() - t0
    result.out_dir = out
    return result


def _index(rows):
    return {(r.protocol, r.node_count, r.priority): r for r in rows}


def test_criterion_01_urgent_delay_superiority(sweep):
    losers, margins = [], []
    for suffix, frag in FIGURE_FRAGMENTS.items():
        t = _index(sweep.rows["fig4" + suffix])
        for n in range(2, 12):
            frog, bop = t[("frog", n, "urgent")].mean_delay_ms, t[("bop", n, "urgent")].mean_delay_ms
            margins.append(bop - frog)
            if not frog < bop:
                losers.append(f"n={n} frag={frag}: {frog:.3f} vs {bop:.3f} ms")
    detail = ("frog below bop at all 20 points" if not losers else "frog not below bop at " + "; ".join(losers))
    detail += f"; sweep took {sweep.elapsed:.0f} s"
    record(1, "FROG-MAC urgent delay < BoP-MAC for n=2..11, frag 16 and 2",
           not losers and sweep.elapsed < SWEEP_BUDGET_S, detail)


def test_criterion_02_normal_delay_penalty(sweep):
    parts, ok = [], True
    for suffix, frag in FIGURE_FRAGMENTS.items():
        t = _index(sweep.rows["fig4" + suffix])
        frog, bop = t[("frog", 11, "normal")].mean_delay_ms, t[("bop", 11, "normal")].mean_delay_ms
        ok &= frog > bop
        parts.append(f"frag {frag}: {frog:.2f} vs {bop:.2f} ms")
    record(2, "FROG-MAC normal delay > BoP-MAC at n=11", ok, "; ".join(parts))


def test_criterion_03_fragment_size_tradeoff(sweep):
    a, b = _index(sweep.rows["fig4a"]), _index(sweep.rows["fig4b"])
    ua, ub = a[("frog", 11, "urgent")], b[("frog", 11, "urgent")]
    na, nb = a[("frog", 11, "normal")], b[("frog", 11, "normal")]
    checks = {
        "urgent delay 2<16": ub.mean_delay_ms < ua.mean_delay_ms,
        "normal delay 2>16": nb.mean_delay_ms > na.mean_delay_ms,
        "urgent thr 2>=16": ub.throughput_Bps >= ua.throughput_Bps,
        "normal thr 2<16": nb.throughput_Bps < na.throughput_Bps,
    }
    detail = ", ".join(f"{k} {'ok' if v else 'no'}" for k, v in checks.items())
    detail += (f"; urgent {ub.mean_delay_ms:.3f}/{ua.mean_delay_ms:.3f} ms, "
               f"{ub.throughput_Bps:.1f}/{ua.throughput_Bps:.1f} B/s")
    record(3, "fragment 2 vs 16 trade-off at n=11", all(checks.values()), detail)


def test_criterion_04_load_trends(sweep):
    bad = []
    seen = set()
    for suffix, frag in FIGURE_FRAGMENTS.items():
        t = _index(sweep.rows["fig4" + suffix])
        for proto in ("bop", "frog"):
            label = proto if proto == "bop" else f"frog{frag}"
            if label in seen:
                continue
            seen.add(label)
            for prio in ("urgent", "normal"):
                lo, hi = t[(proto, 2, prio)].mean_delay_ms, t[(proto, 11, prio)].mean_delay_ms
                if not hi > lo:
                    bad.append(f"{label} {prio} delay {hi:.3f} at 11 vs {lo:.3f} at 2")
            per_lo = t[(proto, 2, "normal")].throughput_Bps / 1
            per_hi = t[(proto, 11, "normal")].throughput_Bps / 10
            if not per_hi < per_lo:
                bad.append(f"{label} per-node normal throughput {per_hi:.2f} at 11 vs {per_lo:.2f} at 2")
    record(4, "delay grows and per-node throughput falls from n=2 to n=11", not bad,
           "; ".join(bad) or "all protocol/priority endpoints")


def test_criterion_05_bop_never_preempts(sweep):
    bop_runs = [r for r in sweep.runs if r.protocol == "bop"]
    hits = sum(r.urgent_over_normal for r in bop_runs)
    # and directly on a full trace of a loaded network
    res = build("bop", nodes=11, duration=200 * S, keep_log=True, seed=42).run()
    data = [tx for tx in res.log if tx.frame.kind == DATA and tx.frame.priority == 1]
    urgent_starts = sorted(tx.start for tx in res.log if tx.frame.priority == 0)
    traced = 0
    for tx in data:
        i = bisect.bisect_right(urgent_starts, tx.start)
        traced += i < len(urgent_starts) and urgent_starts[i] < tx.end
    record(5, "no urgent frame starts during BoP-MAC normal DATA", hits == 0 and traced == 0,
           f"{hits} in {len(bop_runs)} sweep runs, {traced} in a {len(data)}-frame trace")


def test_criterion_06_fragment_arithmetic():
    got = (fragment_count(121, 2), fragment_count(121, 121), fragment_count(121, 16))
    record(6, "fragment_count(121, 2)=61, (121, 121)=1", got == (61, 1, 8), f"got {got}")


def test_criterion_07_single_node_closed_forms():
    byte = 32 * US
    ack = 5 * byte
    res = build("bop", nodes=2, duration=1000 * S, gens=normal_only(), keep_packets=True, seed=42).run()
    delivered = [p for p in res.packets if p.delivered_at is not None]
    bop_bad = sum(p.delivered_at - p.generated_at != p.backoff_draws[0] * 320 * US + 4_064 * US + ack
                  or len(p.backoff_draws) != 1 for p in delivered)

    res = build("frog", nodes=2, duration=1000 * S, gens=normal_only(), keep_log=True, seed=42).run()
    expected_hold = (5 + 5 + 7 * 22 + 15 + 6) * byte + 7 * 600 * US
    holds, start = [], None
    for tx in res.log:
        if tx.frame.kind == RTS:
            start = tx.start
        elif tx.frame.kind == SACK:
            holds.append(tx.end - start)
    frags = sum(tx.frame.kind == FRAG for tx in res.log)
    frog_bad = sum(h != expected_hold for h in holds)
    ok = bop_bad == 0 and frog_bad == 0 and len(delivered) >= 4999 and len(holds) >= 4999
    record(7, "single-node closed forms to the nanosecond", ok,
           f"BoP {len(delivered)} packets, {bop_bad} off; FROG {len(holds)} bursts "
           f"of {expected_hold} ns, {frog_bad} off, {frags} fragments")


def test_criterion_08_determinism(sweep, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "macsim", "figures", "-o", str(tmp_path)],
                          capture_output=True, text=True)
    same = []
    for name, path in sweep.files.items():
        other = tmp_path / path.name
        same.append(proc.returncode == 0 and other.exists() and other.read_bytes() == path.read_bytes())
    record(8, "two figures runs give byte-identical CSVs", all(same),
           f"{sum(same)}/{len(same)} files identical, exit {proc.returncode}")


def test_criterion_09_statistical_harness():
    _, half = ci95([1, 2, 3, 4, 5])
    rng = RngStream(42, 17)
    gaps, t = [], first_arrival(URGENT_POISSON, rng)
    for _ in range(1000):
        nxt = next_arrival(URGENT_POISSON, rng, t)
        gaps.append(nxt - t)
        t = nxt
    mean_s = sum(gaps) / len(gaps) / S
    ok = math.isclose(half, 1.963, abs_tol=0.001) and abs(mean_s - 2.0) <= 0.2
    record(9, "ci95 half-width and Poisson mean", ok,
           f"half-width {half:.4f}, mean of {len(gaps)} gaps {mean_s:.3f} s")


def test_criterion_10_conservation_suite(sweep):
    checks = run_checks(sweep.runs)
    wanted = {"no runtime faults", "conservation", "disjoint delivered airtime", "throughput within capacity"}
    picked = [c for c in checks if c.name in wanted]
    record(10, f"conservation, disjoint airtime and capacity over {len(sweep.runs)} runs",
           len(picked) == len(wanted) and all(c.ok for c in picked),
           "; ".join(f"{c.name}: {c.detail}" for c in picked))
