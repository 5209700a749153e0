import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.kernel import MS, US, PyScheduler, SimulationFault
from macsim.medium import (
    ACK,
    ACK_P_FRAG,
    CTS,
    DATA,
    FRAG,
    NACK,
    RTS,
    SACK,
    Frame,
    Medium,
    PhyConfig,
)


class Listener:
    def __init__(self):
        self.ended = []

    def on_tx_end(self, tx):
        self.ended.append(tx)


def make(keep_log=False):
    sched = PyScheduler()
    lis = Listener()
    return sched, Medium(sched, PhyConfig(), lis, keep_log=keep_log), lis


def data(src, prio=1, size=127):
    return Frame(DATA, size, src, 0, 100 + src, prio)


def start_at(sched, medium, t, src, frame):
    sched.schedule(t, src, "start", medium.begin_transmission, (src, frame))


@pytest.mark.parametrize("size,expected", [(127, 4064 * US), (5, 160 * US), (1, 32 * US)])
def test_tx_duration(size, expected):
    assert PhyConfig().tx_duration(size) == expected


def test_tx_duration_rejects_empty_frame():
    with pytest.raises(ValueError):
        PhyConfig().tx_duration(0)


def test_frame_sizes_by_kind():
    sizes = {RTS: 5, CTS: 5, ACK: 5, SACK: 6, NACK: 6, ACK_P_FRAG: 8}
    for kind, size in sizes.items():
        assert Frame.control(kind, 1, 0, 1, 0).size_bytes == size
        with pytest.raises(ValueError):
            Frame(kind, size + 1, 1, 0, 1, 0)
    assert Frame(DATA, 127, 1, 0, 1, 0).size_bytes == 127


def test_frag_index_rules():
    Frame(FRAG, 22, 1, 0, 1, 1, frag_index=0, frag_total=8)
    with pytest.raises(ValueError):
        Frame(FRAG, 22, 1, 0, 1, 1, frag_index=8, frag_total=8)
    with pytest.raises(ValueError):
        Frame(FRAG, 22, 1, 0, 1, 1)
    with pytest.raises(ValueError):
        Frame(DATA, 127, 1, 0, 1, 1, frag_index=0, frag_total=1)


def test_sense_idle_busy_and_end_boundary():
    sched, m, _ = make()
    assert m.sense() == "idle"
    start_at(sched, m, 0, 1, data(1))
    sched.run_until(2 * MS)
    assert m.sense() == "busy"
    # at the exact end instant the frame no longer occupies the channel
    probes = []
    sched.schedule(4064 * US, "probe", "probe", lambda: probes.append(m.sense()))
    sched.run_until(4064 * US)
    assert probes == ["idle"]


def test_lone_frame_delivered_at_end():
    sched, m, lis = make()
    start_at(sched, m, 1000, 1, data(1))
    sched.run_until(10 * MS)
    (tx,) = lis.ended
    assert not tx.destroyed and tx.end == 1000 + 4064 * US
    assert m.delivered[DATA] == 1 and m.transmitted[DATA] == 1


def test_overlap_destroys_every_frame():
    sched, m, lis = make()
    start_at(sched, m, 0, 1, data(1))
    start_at(sched, m, 1 * MS, 2, data(2))
    start_at(sched, m, 2 * MS, 3, Frame.control(RTS, 3, 0, 7, 0))
    sched.run_until(20 * MS)
    assert len(lis.ended) == 3
    assert all(tx.destroyed for tx in lis.ended)
    assert m.delivered[DATA] == 0 and m.delivered[RTS] == 0
    assert m.collisions == {1: 2, 0: 1}


def test_back_to_back_frames_both_delivered():
    sched, m, lis = make()
    start_at(sched, m, 0, 1, data(1))
    start_at(sched, m, 4064 * US, 0, Frame.control(ACK, 0, 1, 101, 1))
    sched.run_until(20 * MS)
    assert [tx.destroyed for tx in lis.ended] == [False, False]


def test_same_instant_starts_collide():
    sched, m, lis = make()
    start_at(sched, m, 5, 1, data(1))
    start_at(sched, m, 5, 2, data(2))
    sched.run_until(20 * MS)
    assert all(tx.destroyed for tx in lis.ended)


def test_sender_cannot_start_twice():
    sched, m, _ = make()
    start_at(sched, m, 0, 1, data(1))
    start_at(sched, m, 10, 1, data(1))
    with pytest.raises(SimulationFault):
        sched.run_until(1 * MS)


def test_busy_before_ignores_frames_starting_now():
    sched, m, _ = make()
    seen = []
    start_at(sched, m, 100, 1, data(1))
    sched.schedule(100, "probe", "probe", lambda: seen.append(m.busy_before()))
    sched.schedule(200, "probe", "probe", lambda: seen.append(m.busy_before()))
    sched.run_until(1 * MS)
    assert seen == [False, True]


def test_urgent_over_normal_counter():
    sched, m, _ = make()
    start_at(sched, m, 0, 1, data(1, prio=1))
    start_at(sched, m, 1 * MS, 2, Frame.control(RTS, 2, 0, 9, 0))
    sched.run_until(20 * MS)
    assert m.urgent_over_normal == 1


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30_000), st.integers(1, 127)), min_size=1, max_size=12))
def test_delivered_frames_are_pairwise_disjoint(starts):
    sched, m, lis = make(keep_log=True)
    # one source per frame so nobody starts twice
    for src, (t, size) in enumerate(starts, 1):
        start_at(sched, m, t * US, src, Frame(DATA, size, src, 0, src, 1))
    sched.run_until(10**9)
    good = sorted((tx.start, tx.end) for tx in lis.ended if not tx.destroyed)
    assert all(a_end <= b_start for (_, a_end), (b_start, _) in zip(good, good[1:]))
    # a frame survives exactly when nothing else overlapped it
    for tx in lis.ended:
        overlapped = any(o is not tx and o.start < tx.end and tx.start < o.end for o in lis.ended)
        assert tx.destroyed == overlapped
    assert m.overlap_violations == 0
    for kind in m.transmitted:
        assert m.delivered[kind] <= m.transmitted[kind]
