"""Multievent matching: single-pattern predicates, entity joins, and
temporal chains over an in-order stream.

Patterns are compiled once into closures; the chain matcher keeps a table
of partial bindings (prefixes of the temporal order) and extends every
compatible one on each event (skip-till-any-match: one event may extend
several partials and open a new one).  Strict temporal ascent compares
(ts, eid), so equal timestamps are ordered by event id.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from saql.events import DEFAULT_ATTR, Entity, Event, KIND_CODES
from saql.language import ast

DEFAULT_CAPACITY = 100_000
DEFAULT_SLACK_MS = 5_000


class EvalCounter:
    """Counts predicate work units (skeleton checks + constraint terms)."""

    __slots__ = ("units",)

    def __init__(self):
        self.units = 0

    def add(self, n: int = 1):
        self.units += n


def wildcard_regex(pattern: str) -> re.Pattern:
    """SQL-LIKE style: `%` matches any substring, everything else literal."""
    parts = pattern.split("%")
    return re.compile(".*".join(re.escape(p) for p in parts), re.DOTALL)


def _literal_test(op: str, literal) -> Callable[[object], bool]:
    if isinstance(literal, str) and "%" in literal and op in ("=", "!="):
        rx = wildcard_regex(literal)
        if op == "=":
            return lambda v: isinstance(v, str) and rx.fullmatch(v) is not None
        return lambda v: isinstance(v, str) and rx.fullmatch(v) is None
    if op == "=":
        return lambda v: v == literal
    if op == "!=":
        return lambda v: v is not None and v != literal
    if op == "<":
        return lambda v: _num(v) is not None and v < literal
    if op == "<=":
        return lambda v: _num(v) is not None and v <= literal
    if op == ">":
        return lambda v: _num(v) is not None and v > literal
    return lambda v: _num(v) is not None and v >= literal


def _num(v):
    return v if isinstance(v, int) and not isinstance(v, bool) else None


def compile_constraint(node: Optional[ast.ConstraintExpr], kind: str,
                       counter: Optional[EvalCounter] = None):
    """Entity predicate for one bracket constraint expression."""
    if node is None:
        return lambda entity: True
    if isinstance(node, ast.Constraint):
        attr = node.attr if node.attr is not None else DEFAULT_ATTR[KIND_CODES[kind]]
        test = _literal_test(node.op, node.value.value)
        if counter is None:
            return lambda entity: test(entity.attrs.get(attr))
        def checked(entity: Entity) -> bool:
            counter.add()
            return test(entity.attrs.get(attr))
        return checked
    left = compile_constraint(node.left, kind, counter)
    right = compile_constraint(node.right, kind, counter)
    if node.op == "&&":
        return lambda entity: left(entity) and right(entity)
    return lambda entity: left(entity) or right(entity)


def compile_globals(globs: list, counter: Optional[EvalCounter] = None):
    tests = []
    for g in globs:
        test = _literal_test(g.op, g.value.value)
        tests.append((g.attr, test))
    if not tests:
        return lambda e: True
    def check(e: Event) -> bool:
        if counter is not None:
            counter.add(len(tests))
        for attr, test in tests:
            if not test(getattr(e, attr)):
                return False
        return True
    return check


@dataclass
class CompiledPattern:
    alias: str
    subject_var: str
    object_var: str
    predicate: Callable[[Event], bool]  # kinds + ops + both constraint sets

    def bindings_for(self, e: Event) -> dict:
        return {self.subject_var: e.subject.identity,
                self.object_var: e.object.identity}


def compile_pattern(p: ast.EventPattern,
                    counter: Optional[EvalCounter] = None) -> CompiledPattern:
    from saql.events import Operation

    subj_kind = KIND_CODES[p.subject.kind]
    obj_kind = KIND_CODES[p.object.kind]
    ops = frozenset(Operation(op) for op in p.ops)
    subj_test = compile_constraint(p.subject.constraint, p.subject.kind, counter)
    obj_test = compile_constraint(p.object.constraint, p.object.kind, counter)

    def predicate(e: Event) -> bool:
        if counter is not None:
            counter.add()  # skeleton check
        return (e.op in ops
                and e.object.kind is obj_kind
                and e.subject.kind is subj_kind
                and subj_test(e.subject)
                and obj_test(e.object))

    return CompiledPattern(p.alias, p.subject.var, p.object.var, predicate)


def match_single(pattern: ast.EventPattern, globs: list, e: Event):
    """One-shot convenience: alias + variable bindings, or None."""
    if not compile_globals(globs)(e):
        return None
    cp = compile_pattern(pattern)
    if not cp.predicate(e):
        return None
    return cp.alias, cp.bindings_for(e)


@dataclass(frozen=True)
class MatchBinding:
    """A complete, consistent assignment of events to every pattern."""

    events: dict  # alias -> Event
    entities: dict  # variable -> identity tuple
    completed_ts: int

    def key(self) -> tuple:
        return tuple(sorted((a, e.eid) for a, e in self.events.items()))


class _Partial:
    __slots__ = ("events", "entities", "filled", "created_seq")

    def __init__(self, events, entities, filled, created_seq):
        self.events = events
        self.entities = entities
        self.filled = filled  # chain positions filled so far
        self.created_seq = created_seq


@dataclass
class MatchStats:
    events: int = 0
    partials: int = 0
    completions: int = 0
    evictions: int = 0
    dropped_late: int = 0

    def snapshot(self) -> dict:
        return {"events": self.events, "partials": self.partials,
                "completions": self.completions, "evictions": self.evictions,
                "dropped_late": self.dropped_late}


class PartialMatchTable:
    """Incremental chain matcher for one query.

    `chain` lists the query's patterns in temporal order.  Events must be
    advanced in (ts, eid) order; each event may extend any partial whose
    next unfilled position it matches (entity variables must agree) and
    may open a fresh partial at position zero.
    """

    def __init__(self, chain: list[CompiledPattern],
                 capacity: int = DEFAULT_CAPACITY):
        self.chain = chain
        self.capacity = capacity
        self.partials: list[_Partial] = []
        self.stats = MatchStats()
        self._seq = 0

    def advance(self, e: Event, prematch: Optional[list[bool]] = None) -> list[MatchBinding]:
        """Feed one in-order event; returns bindings completed by it."""
        self.stats.events += 1
        n = len(self.chain)
        if prematch is None:
            prematch = [cp.predicate(e) for cp in self.chain]
        completed: list[MatchBinding] = []
        fresh: list[_Partial] = []

        for partial in self.partials:
            pos = partial.filled
            if not prematch[pos]:
                continue
            cp = self.chain[pos]
            new_entities = self._extend_entities(partial.entities, cp, e)
            if new_entities is None:
                continue
            events = dict(partial.events)
            events[cp.alias] = e
            if pos + 1 == n:
                self.stats.completions += 1
                completed.append(MatchBinding(events, new_entities, e.ts))
            else:
                self._seq += 1
                fresh.append(_Partial(events, new_entities, pos + 1, self._seq))

        if prematch[0]:
            cp = self.chain[0]
            entities = self._extend_entities({}, cp, e)
            if entities is not None:
                if n == 1:
                    self.stats.completions += 1
                    completed.append(MatchBinding({cp.alias: e}, entities, e.ts))
                else:
                    self._seq += 1
                    fresh.append(_Partial({cp.alias: e}, entities, 1, self._seq))

        if fresh:
            self.partials.extend(fresh)
            overflow = len(self.partials) - self.capacity
            if overflow > 0:
                self.partials = self.partials[overflow:]
                self.stats.evictions += overflow
        self.stats.partials = len(self.partials)
        return completed

    @staticmethod
    def _extend_entities(entities: dict, cp: CompiledPattern, e: Event):
        subj_id = e.subject.identity
        obj_id = e.object.identity
        seen = entities.get(cp.subject_var)
        if seen is not None and seen != subj_id:
            return None
        if cp.subject_var == cp.object_var:
            if subj_id != obj_id:
                return None
        else:
            seen = entities.get(cp.object_var)
            if seen is not None and seen != obj_id:
                return None
        out = dict(entities)
        out[cp.subject_var] = subj_id
        out[cp.object_var] = obj_id
        return out


def match_rate_stats(table: PartialMatchTable) -> dict:
    return table.stats.snapshot()


class ReorderBuffer:
    """Buffers out-of-order arrivals within a slack; later ones are dropped.

    An event is released once something with ts >= event.ts + slack has
    been pushed, guaranteeing released order is (ts, eid)-sorted.
    """

    def __init__(self, slack_ms: int = DEFAULT_SLACK_MS):
        self.slack_ms = slack_ms
        self._heap: list = []
        self._max_ts: Optional[int] = None
        self._seq = 0  # heap tiebreak; events never get compared directly
        self.dropped_late = 0

    def push(self, e: Event) -> list[Event]:
        if self._max_ts is not None and e.ts < self._max_ts - self.slack_ms:
            self.dropped_late += 1
            return []
        self._seq += 1
        heapq.heappush(self._heap, (e.ts, e.eid, self._seq, e))
        if self._max_ts is None or e.ts > self._max_ts:
            self._max_ts = e.ts
        released = []
        watermark = self._max_ts - self.slack_ms
        while self._heap and self._heap[0][0] <= watermark:
            released.append(heapq.heappop(self._heap)[3])
        return released

    def flush(self) -> list[Event]:
        return [heapq.heappop(self._heap)[3] for _ in range(len(self._heap))]
