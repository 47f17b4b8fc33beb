"""Master/dependent query grouping: compatible queries share one pass.

Two queries are compatible when they agree on window length, pattern
skeleton (kinds, operation sets, chain shape) and one side's constraints
are a syntactic subset of the other's; the less constrained side can act
as master.  Inclusion also recognizes that an equality literal satisfies
a wildcard pattern it matches.  Masters evaluate their patterns once per
event; dependents only check their residual constraints on events the
master admitted, which keeps per-query state and alerts identical to
standalone execution while skipping duplicated predicate work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from saql.events import Event
from saql.evaluate import Alert
from saql.language.signature import ConstraintSet, QuerySignature
from saql.matching import EvalCounter, wildcard_regex, _literal_test
from saql.runtime import QueryRuntime


def _triple_implied(weak: tuple, strong_set: frozenset) -> bool:
    if weak in strong_set:
        return True
    attr, op, value = weak
    if op == "=" and isinstance(value, str) and "%" in value:
        rx = wildcard_regex(value)
        for (a2, op2, v2) in strong_set:
            if a2 == attr and op2 == "=" and isinstance(v2, str) \
                    and "%" not in v2 and rx.fullmatch(v2):
                return True
    return False


def _includes(weaker: ConstraintSet, stronger: ConstraintSet) -> bool:
    """True when every constraint of `weaker` is implied by `stronger`."""
    if weaker.conjunction is None or stronger.conjunction is None:
        return weaker.canonical == stronger.canonical
    return all(_triple_implied(t, stronger.conjunction)
               for t in weaker.conjunction)


def _masters(a: QuerySignature, b: QuerySignature) -> bool:
    """a admits a superset of b's events (skeletons already known equal)."""
    if not all(_triple_implied(t, b.globals) for t in a.globals):
        return False
    for (sa, oa), (sb, ob) in zip(a.constraints, b.constraints):
        if not _includes(sa, sb) or not _includes(oa, ob):
            return False
    return True


def compatible(a: QuerySignature, b: QuerySignature) -> Optional[str]:
    """Grouping relation: "a" when a can master b, "b" for the converse,
    "both" when the signatures admit identical events, None otherwise."""
    if (a.window_ms, a.patterns, a.chain) != (b.window_ms, b.patterns, b.chain):
        return None
    ab = _masters(a, b)
    ba = _masters(b, a)
    if ab and ba:
        return "both"
    if ab:
        return "a"
    if ba:
        return "b"
    return None


@dataclass
class QueryGroup:
    """Planning result: one master and the queries that ride along."""

    master: str
    dependents: list = field(default_factory=list)
    signature: Optional[QuerySignature] = None

    def members(self) -> list:
        return [self.master] + self.dependents


def group(queries) -> list[QueryGroup]:
    """Greedy grouping of (id, signature) pairs in submission order.

    A query joins the first group whose master can master it, or whose
    master it can itself master (the weaker query is re-elected master);
    otherwise it opens a new group.  Deterministic for a given order.
    """
    groups: list[QueryGroup] = []
    for qid, sig in queries:
        for g in groups:
            relation = compatible(g.signature, sig)
            if relation in ("a", "both"):
                g.dependents.append(qid)
                break
            if relation == "b":
                g.dependents.append(g.master)
                g.master = qid
                g.signature = sig
                break
        else:
            groups.append(QueryGroup(master=qid, signature=sig))
    return groups


# ------------------------------------------------------------------ execution

def _compile_entity_residual(weaker: ConstraintSet, stronger: ConstraintSet,
                             counter: EvalCounter):
    """Predicate for the constraints `stronger` adds on top of `weaker`."""
    if weaker.conjunction is None or stronger.conjunction is None:
        return None  # exact equality was required for grouping
    residual = stronger.conjunction - weaker.conjunction
    if not residual:
        return None
    tests = [(attr, _literal_test(op, value)) for attr, op, value in residual]

    def check(entity) -> bool:
        counter.add(len(tests))
        return all(test(entity.attrs.get(attr)) for attr, test in tests)

    return check


def _compile_event_residual(weaker: frozenset, stronger: frozenset,
                            counter: EvalCounter):
    residual = stronger - weaker
    if not residual:
        return None
    tests = [(attr, _literal_test(op, value)) for attr, op, value in residual]

    def check(e: Event) -> bool:
        counter.add(len(tests))
        return all(test(getattr(e, attr)) for attr, test in tests)

    return check


class _Dependent:
    __slots__ = ("runtime", "globals_residual", "pattern_residuals")

    def __init__(self, runtime, globals_residual, pattern_residuals):
        self.runtime = runtime
        self.globals_residual = globals_residual
        self.pattern_residuals = pattern_residuals  # per chain pos: (subj, obj)


class GroupExecutor:
    """Drives a master runtime and routes admitted events to dependents."""

    def __init__(self, gid: str, master: QueryRuntime,
                 master_sig: QuerySignature):
        self.gid = gid
        self.master = master
        self.signature = master_sig
        self.residual_counter = EvalCounter()
        self.deps: list[_Dependent] = []
        self.events_routed = 0
        self.failures: list[tuple[str, str]] = []  # (qid, diagnostic)
        self._dead: set = set()

    def member_ids(self) -> list:
        return [self.master.qid] + [d.runtime.qid for d in self.deps]

    def runtimes(self) -> list[QueryRuntime]:
        return [self.master] + [d.runtime for d in self.deps]

    @property
    def eval_units(self) -> int:
        return sum(rt.counter.units for rt in self.runtimes()) \
            + self.residual_counter.units

    def add_dependent(self, runtime: QueryRuntime, sig: QuerySignature):
        """Wire a dependent: build residual predicates against the master."""
        order = list(self.signature.chain)
        dep_order = list(sig.chain)
        residuals = []
        for pos in range(len(order)):
            mi, di = order[pos], dep_order[pos]
            ms, mo = self.signature.constraints[mi]
            ds, do = sig.constraints[di]
            residuals.append((
                _compile_entity_residual(ms, ds, self.residual_counter),
                _compile_entity_residual(mo, do, self.residual_counter)))
        globals_residual = _compile_event_residual(
            self.signature.globals, sig.globals, self.residual_counter)
        self.deps.append(_Dependent(runtime, globals_residual, residuals))

    def remove(self, qid: str) -> Optional[QueryRuntime]:
        """Detach a member; returns its runtime (None if unknown).

        Removing the master returns it and leaves the group master-less;
        the engine re-plans the remaining members into new executors.
        """
        if self.master is not None and self.master.qid == qid:
            removed = self.master
            self.master = None
            return removed
        for i, dep in enumerate(self.deps):
            if dep.runtime.qid == qid:
                return self.deps.pop(i).runtime
        return None

    def _guarded(self, runtime: QueryRuntime, fn) -> list[Alert]:
        """One member's evaluator error must never stall the group: record
        the diagnostic, drop the member from further routing, move on."""
        if runtime.qid in self._dead:
            return []
        try:
            return fn()
        except Exception as exc:
            self._dead.add(runtime.qid)
            self.failures.append((runtime.qid, f"{type(exc).__name__}: {exc}"))
            return []

    def take_failures(self) -> list[tuple[str, str]]:
        out = self.failures
        self.failures = []
        return out

    def feed(self, e: Event) -> list[tuple[str, list[Alert]]]:
        """Run one event through master and dependents, in member order."""
        if not self.master.admits(e):
            return []
        self.events_routed += 1
        # pattern predicates are pure, so master admission keeps serving
        # dependents even after the master's own evaluator failed
        prematch = [cp.predicate(e) for cp in self.master.chain]
        out = [(self.master.qid,
                self._guarded(self.master, lambda: self.master.feed(e, prematch)))]
        if not any(prematch):
            return out
        for dep in self.deps:
            if dep.runtime.qid in self._dead:
                continue
            if dep.globals_residual is not None and not dep.globals_residual(e):
                continue
            bits = []
            for pos, hit in enumerate(prematch):
                if not hit:
                    bits.append(False)
                    continue
                subj_check, obj_check = dep.pattern_residuals[pos]
                ok = (subj_check is None or subj_check(e.subject)) and \
                     (obj_check is None or obj_check(e.object))
                bits.append(ok)
            out.append((dep.runtime.qid,
                        self._guarded(dep.runtime,
                                      lambda: dep.runtime.feed(e, bits))))
        return out

    def flush(self, emit_alerts: bool = True) -> list[tuple[str, list[Alert]]]:
        return [(rt.qid, self._guarded(rt, lambda: rt.flush(emit_alerts)))
                for rt in self.runtimes()]
