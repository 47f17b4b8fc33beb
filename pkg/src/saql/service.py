"""The operational shell: one pipeline thread drives stream -> groups ->
alert journal, while submissions, stops and replay sessions arrive on a
control queue and apply at event boundaries.

Alerts land in a bounded in-memory journal with monotonically increasing
cursors; readers (CLI, HTTP event stream) resume from any cursor still in
the journal and are told to restart when theirs has been evicted.
Processing one event at a time on a single thread keeps the journal order
a pure function of the stream, so replays are reproducible end to end.
"""

from __future__ import annotations

import gc
import itertools
import json
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from saql.events import Event
from saql.language import QueryError, parse, signature
from saql.matching import ReorderBuffer
from saql.runtime import QueryRuntime
from saql.scheduler import GroupExecutor, compatible
from saql.store import EventStore, ReplaySpec, SinkClosed, replay

JOURNAL_CAPACITY = 100_000


class UnknownQueryId(KeyError):
    pass


class CursorExpired(Exception):
    def __init__(self, restart: int):
        self.restart = restart
        super().__init__(f"cursor evicted; restart from {restart}")


class ReplayAlreadyRunning(Exception):
    pass


class AlertJournal:
    """Bounded multi-reader alert log with monotone cursors."""

    def __init__(self, capacity: int = JOURNAL_CAPACITY):
        self._entries: deque = deque(maxlen=capacity)
        self._next = 1
        self._cond = threading.Condition()

    def append(self, alert) -> int:
        with self._cond:
            seq = self._next
            self._next += 1
            self._entries.append((seq, alert.to_wire()))
            self._cond.notify_all()
            return seq

    @property
    def last(self) -> int:
        with self._cond:
            return self._next - 1

    @property
    def first(self) -> int:
        with self._cond:
            return self._entries[0][0] if self._entries else self._next

    def read_since(self, cursor: int) -> list:
        """Entries after the cursor; raises CursorExpired on evicted ones."""
        with self._cond:
            if cursor + 1 < self.first and cursor < self._next - 1:
                raise CursorExpired(self._next - 1)
            return [entry for entry in self._entries if entry[0] > cursor]

    def wait_beyond(self, cursor: int, timeout: float) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self._next - 1 > cursor, timeout)


@dataclass
class QueryHandle:
    id: str
    text: str
    status: str  # validating | running | error | stopped
    group: Optional[str] = None
    error: Optional[dict] = None
    runtime: Optional[QueryRuntime] = field(default=None, repr=False)

    def to_json(self) -> dict:
        counters = self.runtime.stats() if self.runtime is not None else {}
        return {"id": self.id, "status": self.status, "group": self.group,
                "error": self.error, "counters": counters, "text": self.text}


class ReplaySession:
    BATCH = 512  # hand-off size when streaming flat out (speed 0)

    def __init__(self, core: "EngineCore", spec: ReplaySpec):
        self.core = core
        self.spec = spec
        self.total = core.store.count_estimate(spec)
        self.emitted = 0
        self.cancelled = False
        self.error: Optional[str] = None
        self.flushed = threading.Event()
        self.started_at = time.monotonic()
        self.wall_ms: Optional[int] = None
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="saql-replay")

    def start(self):
        self._thread.start()

    def _run(self):
        # paced replays hand events over one at a time so alerts track the
        # replay clock; speed 0 batches them, which keeps queue overhead off
        # the hot path while the reader thread overlaps segment decompression
        # with pipeline work
        batch_size = 1 if self.spec.speed > 0 else self.BATCH
        batch: list = []

        def sink(e: Event):
            if self.cancelled:
                raise SinkClosed()
            batch.append(e)
            if len(batch) >= batch_size:
                self.core._put(("events", batch[:]))
                self.emitted += len(batch)
                batch.clear()

        try:
            summary = replay(self.core.store, self.spec, sink)
            self.wall_ms = summary.wall_ms
        except Exception as exc:  # session must still complete for pollers
            self.error = str(exc)
        if batch:
            self.core._put(("events", batch[:]))
            self.emitted += len(batch)
        self.core._put(("flush", self.flushed))

    @property
    def done(self) -> bool:
        return self.flushed.is_set()

    def status(self) -> dict:
        wall = self.wall_ms if self.wall_ms is not None \
            else int((time.monotonic() - self.started_at) * 1000)
        return {"running": not self.done, "done": self.done,
                "emitted": self.emitted, "total": self.total,
                "speed": self.spec.speed, "wall_ms": wall, "error": self.error,
                "effective_rate": int(self.emitted / (wall / 1000)) if wall else None}


class EngineCore:
    """Query registry, grouping, and the single-threaded event pipeline."""

    def __init__(self, store: Optional[EventStore] = None,
                 share_streams: bool = True,
                 journal_capacity: int = JOURNAL_CAPACITY,
                 slack_ms: Optional[int] = None,
                 tune_gc: bool = True):
        if tune_gc:
            # the pipeline churns through millions of short-lived records;
            # default collection thresholds spend a lot of time rescanning
            # them, so raise the young-generation bar (pass tune_gc=False
            # when embedding the engine in a process that owns gc policy)
            gc.set_threshold(100_000, 50, 50)
        self.store = store
        self.share_streams = share_streams
        self.journal = AlertJournal(journal_capacity)
        self.handles: dict[str, QueryHandle] = {}
        self.executors: list[GroupExecutor] = []
        self._order: list[str] = []  # submission order of live queries
        self._qids = itertools.count(1)
        self._gids = itertools.count(1)
        self._lock = threading.RLock()
        # small bound: keeps the replay reader just ahead of the pipeline
        # without letting millions of parsed events pile up in memory
        self._queue: queue.Queue = queue.Queue(maxsize=64)
        self._reorder = ReorderBuffer() if slack_ms is None else ReorderBuffer(slack_ms)
        self._session: Optional[ReplaySession] = None
        self._stopping = False
        self._thread = threading.Thread(target=self._pipeline, daemon=True,
                                        name="saql-pipeline")
        self._thread.start()

    # --- pipeline -------------------------------------------------------------

    def _put(self, op):
        self._queue.put(op)

    def _pipeline(self):
        while True:
            op = self._queue.get()
            try:
                if not self._handle_op(op):
                    return
            finally:
                self._queue.task_done()

    def _handle_op(self, op) -> bool:
        """Apply one control-queue op; False means shutdown."""
        kind = op[0]
        if kind == "event":
            for released in self._reorder.push(op[1]):
                self._dispatch(released)
        elif kind == "events":
            push = self._reorder.push
            dispatch = self._dispatch
            for e in op[1]:
                for released in push(e):
                    dispatch(released)
        elif kind == "attach":
            self._do_attach(op[1])
            op[2].set()
        elif kind == "detach":
            self._do_detach(op[1])
            op[2].set()
        elif kind == "flush":
            self._do_flush()
            if op[1] is not None:
                op[1].set()
        elif kind == "shutdown":
            op[1].set()
            return False
        return True

    def _do_flush(self):
        for released in self._reorder.flush():
            self._dispatch(released)
        with self._lock:
            executors = list(self.executors)
        for ex in executors:
            for _, alerts in ex.flush():
                for alert in alerts:
                    self.journal.append(alert)
            if ex.failures:
                self._record_failures(ex)

    def _dispatch(self, e: Event):
        # topology only changes on this same pipeline thread, so no lock
        for ex in self.executors:
            for _, alerts in ex.feed(e):
                for alert in alerts:
                    self.journal.append(alert)
            if ex.failures:
                self._record_failures(ex)

    def _record_failures(self, ex):
        """The error reporter: a failed evaluator turns its handle to error."""
        with self._lock:
            for qid, message in ex.take_failures():
                handle = self.handles.get(qid)
                if handle is not None and handle.status == "running":
                    handle.status = "error"
                    handle.error = {"line": None, "col": None, "message": message}

    # --- registry -------------------------------------------------------------

    def submit(self, text: str) -> QueryHandle:
        qid = f"q{next(self._qids)}"
        handle = QueryHandle(qid, text, "validating")
        try:
            query = parse(text)
        except QueryError as err:
            handle.status = "error"
            handle.error = {"line": err.line, "col": err.col, "message": str(err)}
            with self._lock:
                self.handles[qid] = handle
            return handle
        handle.runtime = QueryRuntime(query, qid)
        with self._lock:
            self.handles[qid] = handle
        ready = threading.Event()
        self._put(("attach", handle, ready))
        ready.wait()
        return handle

    def _do_attach(self, handle: QueryHandle):
        sig = signature(handle.runtime.query)
        with self._lock:
            gid = None
            if self.share_streams:
                for ex in self.executors:
                    if ex.master is not None and \
                            compatible(ex.signature, sig) in ("a", "both"):
                        ex.add_dependent(handle.runtime, sig)
                        gid = ex.gid
                        break
            if gid is None:
                gid = f"g{next(self._gids)}"
                self.executors.append(GroupExecutor(gid, handle.runtime, sig))
            handle.group = gid
            handle.status = "running"
            self._order.append(handle.id)

    def stop(self, qid: str) -> QueryHandle:
        with self._lock:
            handle = self.handles.get(qid)
            if handle is None:
                raise UnknownQueryId(qid)
            if handle.status != "running":
                return handle  # idempotent by default
        done = threading.Event()
        self._put(("detach", qid, done))
        done.wait()
        return handle

    def _do_detach(self, qid: str):
        with self._lock:
            handle = self.handles[qid]
            target = None
            for ex in self.executors:
                if qid in ex.member_ids():
                    target = ex
                    break
            if target is None:
                return
            was_master = target.master is not None and target.master.qid == qid
            removed = target.remove(qid)
            if removed is not None:
                removed.flush(emit_alerts=False)
            if was_master:
                survivors = [d.runtime for d in target.deps]
                self.executors.remove(target)
                self._regroup(survivors, target.gid)
            handle.status = "stopped"
            if qid in self._order:
                self._order.remove(qid)

    def _regroup(self, runtimes: list, gid_hint: str):
        """Re-plan surviving dependents after their master went away."""
        order = {qid: i for i, qid in enumerate(self._order)}
        runtimes = sorted(runtimes, key=lambda rt: order.get(rt.qid, 1 << 30))
        for rt in runtimes:
            sig = signature(rt.query)
            placed = False
            for ex in self.executors:
                if ex.master is not None and \
                        compatible(ex.signature, sig) in ("a", "both"):
                    ex.add_dependent(rt, sig)
                    self.handles[rt.qid].group = ex.gid
                    placed = True
                    break
            if not placed:
                gid = f"g{next(self._gids)}"
                self.executors.append(GroupExecutor(gid, rt, sig))
                self.handles[rt.qid].group = gid

    def list_queries(self) -> list[QueryHandle]:
        with self._lock:
            return list(self.handles.values())

    def get_handle(self, qid: str) -> QueryHandle:
        with self._lock:
            handle = self.handles.get(qid)
        if handle is None:
            raise UnknownQueryId(qid)
        return handle

    # --- ingestion ------------------------------------------------------------

    def ingest_event(self, e: Event):
        self._put(("event", e))

    def flush(self, wait: bool = True):
        done = threading.Event()
        self._put(("flush", done))
        if wait:
            done.wait()

    def drain(self):
        """Block until everything queued so far has been processed."""
        self._queue.join()

    def close(self):
        done = threading.Event()
        self._put(("shutdown", done))
        done.wait()

    # --- replay ---------------------------------------------------------------

    def start_replay(self, spec: ReplaySpec) -> dict:
        if self.store is None:
            raise ReplayAlreadyRunning("no store configured")
        with self._lock:
            if self._session is not None and not self._session.done:
                raise ReplayAlreadyRunning("a replay session is active")
            self._session = ReplaySession(self, spec)
            self._session.start()
            return {"session": "replay", "spec": spec.to_json(),
                    "total": self._session.total}

    def replay_status(self) -> dict:
        with self._lock:
            session = self._session
        if session is None:
            return {"running": False, "done": False, "emitted": 0, "total": 0,
                    "speed": None, "wall_ms": 0, "error": None,
                    "effective_rate": None}
        return session.status()

    def stats(self) -> dict:
        with self._lock:
            groups = [{"id": ex.gid,
                       "master": ex.master.qid if ex.master else None,
                       "dependents": [d.runtime.qid for d in ex.deps],
                       "events_routed": ex.events_routed,
                       "eval_units": ex.eval_units}
                      for ex in self.executors]
        return {"queries": len(self.handles),
                "groups": groups,
                "journal": {"first": self.journal.first, "last": self.journal.last},
                "store": {"agents": self.store.agents() if self.store else []},
                "replay": self.replay_status(),
                "dropped_late": self._reorder.dropped_late}


# ------------------------------------------------------------------- HTTP API

def create_app(core: EngineCore, console_dir=None):
    app = FastAPI(title="saql engine")

    @app.post("/api/queries")
    async def submit_query(request: Request):
        text = (await request.body()).decode("utf-8")
        return core.submit(text).to_json()

    @app.get("/api/queries")
    def list_queries():
        return [h.to_json() for h in core.list_queries()]

    @app.delete("/api/queries/{qid}")
    def stop_query(qid: str):
        try:
            return core.stop(qid).to_json()
        except UnknownQueryId:
            return JSONResponse({"error": f"unknown query {qid}"}, status_code=404)

    @app.get("/api/alerts/stream")
    def alert_stream(since: int = 0, follow: int = 1):
        def generate():
            cursor = since
            while True:
                try:
                    entries = core.journal.read_since(cursor)
                except CursorExpired as gap:
                    yield ("event: gap\ndata: " +
                           json.dumps({"restart": gap.restart}) + "\n\n")
                    cursor = gap.restart
                    continue
                for seq, alert in entries:
                    cursor = seq
                    yield f"id: {seq}\ndata: {json.dumps(alert)}\n\n"
                if not follow:
                    return
                if not core.journal.wait_beyond(cursor, timeout=5.0):
                    yield ": keepalive\n\n"

        return StreamingResponse(generate(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    @app.post("/api/replay")
    async def start_replay(request: Request):
        try:
            spec = ReplaySpec.from_json(await request.json())
        except (ValueError, TypeError) as err:
            return JSONResponse({"error": str(err)}, status_code=400)
        try:
            return core.start_replay(spec)
        except ReplayAlreadyRunning as err:
            return JSONResponse({"error": str(err)}, status_code=409)

    @app.get("/api/replay/status")
    def replay_status():
        return core.replay_status()

    @app.get("/api/stats")
    def stats():
        return core.stats()

    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app
