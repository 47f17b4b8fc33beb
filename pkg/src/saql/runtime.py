"""Per-query execution: one runtime owns a query's matcher table, window
state, invariant/cluster machinery, and alert projection.

The window clock advances on events the query admits (globals pass and at
least one pattern matches); gaps between admitted events close every
intervening window so history indexing counts real time.  Feeding can be
driven standalone or by a group executor that pre-computes the per-pattern
match bits (see scheduler).
"""

from __future__ import annotations

from typing import Optional

from saql.dbscan import OUTLIER, dbscan
from saql.evaluate import (
    ABSENT,
    Alert,
    EvalContext,
    InvariantState,
    eval_expr,
    invariant_post_update,
    invariant_step,
    project_return,
)
from saql.events import Event
from saql.language import ast
from saql.matching import (
    DEFAULT_CAPACITY,
    EvalCounter,
    PartialMatchTable,
    ReorderBuffer,
    compile_globals,
    compile_pattern,
)
from saql.windows import StateHistory, WindowState, sort_key


class QueryRuntime:
    def __init__(self, query: ast.Query, qid: str,
                 counter: Optional[EvalCounter] = None,
                 capacity: int = DEFAULT_CAPACITY):
        self.query = query
        self.qid = qid
        self.kind = query.kind
        self.counter = counter if counter is not None else EvalCounter()
        self.admits = compile_globals(query.globals, self.counter)
        chain_aliases = query.chain if query.chain is not None \
            else [p.alias for p in query.patterns]
        self.chain_aliases = chain_aliases
        self.chain = [compile_pattern(query.pattern_by_alias(a), self.counter)
                      for a in chain_aliases]
        self.table = PartialMatchTable(self.chain, capacity)

        # where each entity variable can be read from a completed binding
        self.var_source: dict = {}
        for p in query.patterns:
            self.var_source.setdefault(p.subject.var, (p.alias, "subject"))
            self.var_source.setdefault(p.object.var, (p.alias, "object"))

        self.window_ms = query.window.length_ms if query.window else None
        self.state = query.state
        self.t0: Optional[int] = None
        self.current: Optional[WindowState] = None
        self.history = StateHistory(query.state.depth) if query.state else None
        self.invariant = InvariantState.fresh(query.invariant) \
            if query.invariant else None
        self._seen_tuples: set = set()
        self.skipped_groupless = 0

        # handle counters
        self.events_seen = 0
        self.windows_closed = 0
        self.alerts_emitted = 0

    # --- feeding ------------------------------------------------------------

    def feed(self, e: Event, prematch: Optional[list] = None) -> list[Alert]:
        """Process one in-order event; returns alerts it caused."""
        if prematch is None:
            if not self.admits(e):
                return []
            prematch = [cp.predicate(e) for cp in self.chain]
        if not any(prematch):
            return []
        self.events_seen += 1
        alerts: list[Alert] = []
        if self.state is not None:
            if self.t0 is None:
                self.t0 = e.ts
                self.current = self._open_window(0)
            idx = (e.ts - self.t0) // self.window_ms
            while idx > self.current.index:
                alerts.extend(self._close_current())
        for binding in self.table.advance(e, prematch):
            if self.state is not None:
                self._accumulate(binding)
            else:
                alert = self._rule_alert(binding)
                if alert is not None:
                    alerts.append(alert)
        self.alerts_emitted += len(alerts)
        return alerts

    def flush(self, emit_alerts: bool = True) -> list[Alert]:
        """Close the open window at end of stream (or silently on stop)."""
        if self.state is None or self.current is None:
            return []
        alerts = self._close_current() if emit_alerts else []
        self.current = None
        self.t0 = None
        self.alerts_emitted += len(alerts)
        return alerts

    def stats(self) -> dict:
        out = {"events": self.events_seen, "windows": self.windows_closed,
               "alerts": self.alerts_emitted}
        out.update(self.table.stats.snapshot())
        return out

    # --- rule queries ---------------------------------------------------------

    def _rule_alert(self, binding) -> Optional[Alert]:
        ctx = EvalContext(attr=lambda base, attrname:
                          self._binding_attr(binding, base, attrname))
        if self.query.alert is not None and eval_expr(self.query.alert, ctx) is not True:
            return None
        values = self._project(ctx)
        if values is None:
            return None
        return Alert(self.qid, "rule", None, None, values, binding.completed_ts)

    def _binding_attr(self, binding, base: str, attrname: Optional[str]):
        if base in binding.events:
            e = binding.events[base]
            if attrname == "amount":
                return e.amount if e.amount is not None else ABSENT
            value = getattr(e, attrname, None)
            return value if value is not None else ABSENT
        source = self.var_source.get(base)
        if source is None:
            return ABSENT
        alias, role = source
        e = binding.events.get(alias)
        if e is None:
            return ABSENT
        entity = e.subject if role == "subject" else e.object
        value = entity.get(attrname if attrname is not None else "default")
        return value if value is not None else ABSENT

    # --- stateful queries -----------------------------------------------------

    def _open_window(self, index: int) -> WindowState:
        start = self.t0 + index * self.window_ms
        return WindowState(index, start, start + self.window_ms, self.state)

    def _accumulate(self, binding):
        group = self._group_key(binding)
        if group is None:
            self.skipped_groupless += 1
            return
        values = {}
        for f in self.state.fields:
            v = self._binding_attr(binding, f.arg.base, f.arg.attr)
            values[f.name] = None if v is ABSENT else v
        self.current.accumulate(group, values)

    def _group_key(self, binding) -> Optional[tuple]:
        key = []
        for term in self.state.group_by:
            v = self._binding_attr(binding, term.base, term.attr)
            if v is ABSENT:
                return None
            key.append(v)
        return tuple(key)

    def _close_current(self) -> list[Alert]:
        frozen = self.current.finalize()
        self.history.push(frozen)
        self.windows_closed += 1
        self.current = self._open_window(frozen.index + 1)

        groups = frozen.sorted_groups()
        cluster_labels = None
        if self.query.cluster is not None:
            points = [(g, (float(v),)) for g, v in
                      frozen.all_values(self.query.cluster.points.fieldname)]
            cluster_labels = dbscan(points, self.query.cluster.eps,
                                    self.query.cluster.min_pts).labels

        contexts = [(g, self._group_context(g, cluster_labels)) for g in groups]

        alerts_active = True
        if self.invariant is not None:
            alerts_active = invariant_step(
                self.invariant, self.query.invariant, [c for _, c in contexts])

        alerts: list[Alert] = []
        if alerts_active and self.query.alert is not None:
            for group, ctx in contexts:
                if self.invariant is not None:
                    ctx.invariant = self.invariant.value
                if eval_expr(self.query.alert, ctx) is not True:
                    continue
                values = self._project(ctx, group)
                if values is None:
                    continue
                alerts.append(Alert(self.qid, self.kind, frozen.index, group,
                                    values, frozen.w_end))
        if self.invariant is not None and alerts_active:
            invariant_post_update(self.invariant, self.query.invariant,
                                  [c for _, c in contexts])
        return alerts

    def _group_context(self, group: tuple, cluster_labels) -> EvalContext:
        outlier = bool(cluster_labels is not None
                       and cluster_labels.get(group) == OUTLIER)
        history = self.history
        return EvalContext(
            state=lambda k, f: history.value(k, group, f),
            all_values=lambda f: tuple(v for _, v in
                                       history.current.all_values(f)),
            outlier=outlier,
        )

    # --- projection -----------------------------------------------------------

    def _project(self, ctx: EvalContext, group: Optional[tuple] = None):
        """Values in return-list order; None when suppressed by distinct."""
        returns = self.query.returns
        if returns is None:
            return ()

        def resolve(item):
            if isinstance(item, ast.StateAccess):
                return ctx.state(item.index, item.fieldname)
            if group is not None:
                for pos, term in enumerate(self.state.group_by):
                    if term.base == item.base and term.attr == item.attr:
                        return group[pos]
                return ABSENT
            return ctx.attr(item.base, item.attr)

        values = project_return(returns.items, resolve)
        if returns.distinct:
            if values in self._seen_tuples:
                return None
            self._seen_tuples.add(values)
        return values


def run_query(query: ast.Query, events, qid: str = "q",
              slack_ms: Optional[int] = None) -> list[Alert]:
    """Standalone execution over a finite event sequence (tests, tools)."""
    from saql.matching import DEFAULT_SLACK_MS

    runtime = QueryRuntime(query, qid)
    buf = ReorderBuffer(DEFAULT_SLACK_MS if slack_ms is None else slack_ms)
    alerts: list[Alert] = []
    for e in events:
        for released in buf.push(e):
            alerts.extend(runtime.feed(released))
    for released in buf.flush():
        alerts.extend(runtime.feed(released))
    alerts.extend(runtime.flush())
    return alerts
