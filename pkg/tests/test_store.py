import random

import pytest

from saql.events import serialize_event
from saql.store import (
    EventStore,
    ReplaySpec,
    ReplaySummary,
    SinkClosed,
    replay,
)

from helpers import conn, ev, proc, sort_stream


def lines_for(events):
    return [serialize_event(e) for e in events]


def make_events():
    p1, p2 = proc("a.exe", pid=1), proc("b.exe", pid=2)
    return [
        ev(p1, "write", conn("1.1.1.1"), ts=1_000, agent="db01", amount=1),
        ev(p2, "write", conn("1.1.1.2"), ts=2_000, agent="ws07", amount=2),
        ev(p1, "write", conn("1.1.1.3"), ts=3_000, agent="db01", amount=3),
    ]


def test_partitioned_by_agent(tmp_path):
    store = EventStore(tmp_path)
    stats = store.ingest(lines_for(make_events()))
    assert stats.stored == 3
    assert stats.partitions == 2
    assert store.agents() == ["db01", "ws07"]


def test_duplicate_eid_dropped(tmp_path):
    store = EventStore(tmp_path)
    events = make_events()
    stats = store.ingest(lines_for(events + [events[0]]))
    assert stats.stored == 3
    assert stats.duplicates == 1
    got = list(store.scan(ReplaySpec()))
    assert len(got) == 3


def test_duplicate_across_ingest_calls(tmp_path):
    store = EventStore(tmp_path)
    events = make_events()
    store.ingest(lines_for(events))
    stats = store.ingest(lines_for(events))
    assert stats.stored == 0
    assert stats.duplicates == 3


def test_malformed_skipped_with_counter(tmp_path):
    store = EventStore(tmp_path)
    stats = store.ingest(["{broken", *lines_for(make_events())])
    assert stats.malformed == 1
    assert stats.stored == 3


def test_out_of_order_ingest_reads_back_sorted(tmp_path):
    rng = random.Random(3)
    p = proc("x.exe", pid=9)
    events = [ev(p, "write", conn("1.1.1.1"), ts=1_000 + i * 37, agent="db01",
                 amount=i) for i in range(50)]
    shuffled = events[:]
    rng.shuffle(shuffled)
    store = EventStore(tmp_path)
    store.ingest(lines_for(shuffled))
    got = list(store.scan(ReplaySpec()))
    assert got == sort_stream(events)


def test_round_trip_exactly_once(tmp_path):
    store = EventStore(tmp_path)
    events = make_events()
    store.ingest(lines_for(events))
    got = list(store.scan(ReplaySpec()))
    assert got == sort_stream(events)


def test_agent_filter(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))
    got = list(store.scan(ReplaySpec(agents=frozenset({"db01"}))))
    assert {e.agentid for e in got} == {"db01"}
    assert len(got) == 2


def test_time_range_half_open(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))
    got = list(store.scan(ReplaySpec(t_start=1_000, t_end=3_000)))
    assert [e.ts for e in got] == [1_000, 2_000]


def test_filtering_commutes_with_merging(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))
    both = list(store.scan(ReplaySpec(agents=frozenset({"db01", "ws07"}))))
    a = list(store.scan(ReplaySpec(agents=frozenset({"db01"}))))
    b = list(store.scan(ReplaySpec(agents=frozenset({"ws07"}))))
    assert both == sort_stream(a + b)


def test_replay_speed_zero_counts(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))
    out = []
    summary = replay(store, ReplaySpec(), out.append)
    assert summary.events == 3
    assert [e.ts for e in out] == [1_000, 2_000, 3_000]


def test_replay_paces_by_gap_over_speed(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))
    naps = []
    replay(store, ReplaySpec(speed=2.0), lambda e: None, sleep=naps.append)
    assert naps == pytest.approx([0.5, 0.5])  # 1000 ms gaps at 2x


def test_replay_sink_closed_stops_cleanly(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))

    emitted = []

    def sink(e):
        if len(emitted) == 2:
            raise SinkClosed()
        emitted.append(e)

    summary = replay(store, ReplaySpec(), sink)
    assert summary.stopped_by_sink
    assert summary.events == 2


def test_invalid_spec():
    with pytest.raises(ValueError):
        ReplaySpec(t_start=10, t_end=10)
    with pytest.raises(ValueError):
        ReplaySpec(speed=-1)


def test_count_estimate(tmp_path):
    store = EventStore(tmp_path)
    store.ingest(lines_for(make_events()))
    assert store.count_estimate(ReplaySpec()) == 3
    assert store.count_estimate(ReplaySpec(agents=frozenset({"db01"}))) == 2
