"""File-backed event store and timed replayer.

The store is a directory of gzip segments partitioned by agent and UTC
day (`<agentid>/<yyyy-mm-dd>.evl.gz`), each sorted by (ts, eid) with a
JSON index sidecar carrying (min_ts, max_ts, count).  Replay merges the
selected partitions back into one (ts, eid)-ordered stream and paces
emission by the recorded inter-event gaps divided by the speed factor;
speed 0 streams as fast as possible.
"""

from __future__ import annotations

import gzip
import heapq
import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from saql.events import Event, WireError, WireStats, parse_event, serialize_event

SEGMENT_SUFFIX = ".evl.gz"
INDEX_SUFFIX = ".evl.idx"


class StoreUnreadable(Exception):
    pass


class SinkClosed(Exception):
    """Raised by a sink to stop a replay session cleanly."""


def day_of(ts: int) -> str:
    return datetime.fromtimestamp(ts / 1000, tz=timezone.utc).strftime("%Y-%m-%d")


@dataclass
class IngestStats:
    stored: int = 0
    duplicates: int = 0
    malformed: int = 0
    partitions: int = 0
    unknown_keys: int = 0


@dataclass(frozen=True)
class SegmentInfo:
    agent: str
    day: str
    path: Path
    min_ts: int
    max_ts: int
    count: int


@dataclass(frozen=True)
class ReplaySpec:
    agents: frozenset = frozenset()  # empty = all
    t_start: int = 0
    t_end: int = 2**62
    speed: float = 0.0  # 0 = as fast as possible, 1.0 = real time

    def __post_init__(self):
        if self.t_start >= self.t_end:
            raise ValueError("t_start must be before t_end")
        if self.speed < 0:
            raise ValueError("speed must be >= 0")

    @staticmethod
    def from_json(obj: dict) -> "ReplaySpec":
        return ReplaySpec(agents=frozenset(obj.get("agents") or ()),
                          t_start=int(obj.get("t_start", 0)),
                          t_end=int(obj.get("t_end", 2**62)),
                          speed=float(obj.get("speed", 0.0)))

    def to_json(self) -> dict:
        return {"agents": sorted(self.agents), "t_start": self.t_start,
                "t_end": self.t_end, "speed": self.speed}


@dataclass
class ReplaySummary:
    events: int
    wall_ms: int
    stopped_by_sink: bool = False


class SortedSegmentWriter:
    def __init__(self, path: Path):
        self.path = path
        self._fh = gzip.open(path, "wt", encoding="utf-8", compresslevel=1)
        self.count = 0
        self.min_ts = 0
        self.max_ts = 0

    def write(self, line: str, ts: int):
        if self.count == 0:
            self.min_ts = ts
        self.max_ts = ts
        self._fh.write(line)
        self._fh.write("\n")
        self.count += 1

    def close(self):
        self._fh.close()
        index = {"min_ts": self.min_ts, "max_ts": self.max_ts, "count": self.count}
        self.path.with_name(self.path.name[:-len(SEGMENT_SUFFIX)] + INDEX_SUFFIX) \
            .write_text(json.dumps(index))

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EventStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # --- writing --------------------------------------------------------------

    def ingest(self, lines: Iterable, stats: Optional[IngestStats] = None) -> IngestStats:
        """Parse and file records into their partitions.

        Malformed lines are skipped and counted; a duplicate eid within a
        partition keeps the first copy.
        """
        stats = stats if stats is not None else IngestStats()
        wire = WireStats()
        buckets: dict = {}
        for line in lines:
            if isinstance(line, (bytes, str)) and not line.strip():
                continue
            try:
                e = parse_event(line, wire)
            except WireError:
                stats.malformed += 1
                continue
            buckets.setdefault((e.agentid, day_of(e.ts)), []).append(e)
        stats.unknown_keys += wire.unknown_keys
        for (agent, day), events in sorted(buckets.items()):
            self._merge_partition(agent, day, events, stats)
        return stats

    def ingest_events(self, events: Iterable[Event],
                      stats: Optional[IngestStats] = None) -> IngestStats:
        return self.ingest((serialize_event(e) for e in events), stats)

    def _merge_partition(self, agent: str, day: str, events, stats: IngestStats):
        directory = self.root / agent
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{day}{SEGMENT_SUFFIX}"
        existing: list[Event] = []
        if path.exists():
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                existing = [parse_event(line) for line in fh if line.strip()]
        else:
            stats.partitions += 1
        seen = {e.eid for e in existing}
        merged = existing
        for e in sorted(events, key=lambda e: e.order_key):
            if e.eid in seen:
                stats.duplicates += 1
                continue
            seen.add(e.eid)
            merged.append(e)
            stats.stored += 1
        merged.sort(key=lambda e: e.order_key)
        self._write_segment(path, merged)

    def _write_segment(self, path: Path, events: list[Event]):
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            for e in events:
                fh.write(serialize_event(e))
                fh.write("\n")
        index = {"min_ts": events[0].ts if events else 0,
                 "max_ts": events[-1].ts if events else 0,
                 "count": len(events)}
        path.with_name(path.name[:-len(SEGMENT_SUFFIX)] + INDEX_SUFFIX) \
            .write_text(json.dumps(index))

    def sorted_writer(self, agent: str, day: str) -> "SortedSegmentWriter":
        """Bulk path for generators: lines must arrive (ts, eid)-sorted."""
        directory = self.root / agent
        directory.mkdir(parents=True, exist_ok=True)
        return SortedSegmentWriter(directory / f"{day}{SEGMENT_SUFFIX}")

    # --- reading --------------------------------------------------------------

    def agents(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def segments(self) -> list[SegmentInfo]:
        out = []
        for agent in self.agents():
            for path in sorted((self.root / agent).glob(f"*{SEGMENT_SUFFIX}")):
                day = path.name[:-len(SEGMENT_SUFFIX)]
                idx_path = path.with_name(day + INDEX_SUFFIX)
                try:
                    idx = json.loads(idx_path.read_text())
                except (OSError, json.JSONDecodeError) as exc:
                    raise StoreUnreadable(f"missing or broken index for {path}") from exc
                out.append(SegmentInfo(agent, day, path, idx["min_ts"],
                                       idx["max_ts"], idx["count"]))
        return out

    def count_estimate(self, spec: ReplaySpec) -> int:
        """Upper-bound event count from segment indexes (no data scan)."""
        total = 0
        for seg in self.segments():
            if spec.agents and seg.agent not in spec.agents:
                continue
            if seg.max_ts < spec.t_start or seg.min_ts >= spec.t_end:
                continue
            total += seg.count
        return total

    def _iter_agent(self, agent: str, t_start: int, t_end: int) -> Iterator[Event]:
        for seg in self.segments():
            if seg.agent != agent:
                continue
            if seg.max_ts < t_start or seg.min_ts >= t_end:
                continue
            try:
                with gzip.open(seg.path, "rt", encoding="utf-8") as fh:
                    for line in fh:
                        if len(line) <= 1:
                            continue
                        e = parse_event(line)
                        if t_start <= e.ts < t_end:
                            yield e
            except OSError as exc:
                raise StoreUnreadable(str(seg.path)) from exc

    def scan(self, spec: ReplaySpec) -> Iterator[Event]:
        """All selected events merged in (ts, eid) order."""
        agents = sorted(spec.agents) if spec.agents else self.agents()
        streams = [self._iter_agent(agent, spec.t_start, spec.t_end)
                   for agent in agents]
        return heapq.merge(*streams, key=lambda e: e.order_key)


def replay(store: EventStore, spec: ReplaySpec, sink: Callable[[Event], None],
           sleep=time.sleep) -> ReplaySummary:
    """Emit the selected events to the sink with per-gap pacing."""
    started = time.monotonic()
    emitted = 0
    prev_ts: Optional[int] = None
    stopped = False
    for e in store.scan(spec):
        if spec.speed > 0 and prev_ts is not None and e.ts > prev_ts:
            sleep((e.ts - prev_ts) / 1000.0 / spec.speed)
        prev_ts = e.ts
        try:
            sink(e)
        except SinkClosed:
            stopped = True
            break
        emitted += 1
    wall_ms = int((time.monotonic() - started) * 1000)
    return ReplaySummary(events=emitted, wall_ms=wall_ms, stopped_by_sink=stopped)
