"""Semantic validation and name resolution for parsed queries.

Rewrites `name.field` accesses whose base is the state variable into
explicit current-window state accesses, checks every structural rule
(window/state/invariant/cluster dependencies, alias and variable
consistency, history indices, aggregate functions), and runs a light
type check over alert and invariant expressions so that set/number
mix-ups surface at submission time rather than mid-stream.
"""

from __future__ import annotations

import re
from typing import Optional

from saql.language import ast
from saql.language.errors import ValidationError

_OPS_FOR_KIND = {
    "proc": {"start", "end", "execute"},
    "file": {"read", "write", "execute", "rename", "delete"},
    "ip": {"read", "write"},
}

_EVENT_ATTRS = {"amount", "ts", "te", "agentid", "eid"}

_METHOD_RE = re.compile(r"^\s*DBSCAN\s*\(\s*(\d+(?:\.\d+)?)\s*,\s*(\d+)\s*\)\s*$")


class _Checker:
    def __init__(self, q: ast.Query):
        self.q = q
        self.vars: dict = {}     # entity variable -> kind keyword
        self.aliases: set = set()
        self.state = q.state
        self.invariant = q.invariant
        self.inv_type: Optional[str] = None

    def err(self, message: str, span) -> ValidationError:
        return ValidationError(message, span)

    # --- structure ----------------------------------------------------------

    def run(self) -> ast.Query:
        q = self.q
        self.check_globals()
        self.check_patterns()
        self.check_chain()
        window = self.check_window()
        if q.state is not None:
            if window is None:
                raise self.err("state block requires a #time window", q.state.span)
            self.check_state()
        if q.invariant is not None:
            if q.state is None:
                raise self.err("invariant block requires a state block", q.invariant.span)
            if q.cluster is not None:
                raise self.err("invariant and cluster blocks are mutually exclusive",
                               q.cluster.span)
            self.check_invariant()
        if q.cluster is not None:
            if q.state is None:
                raise self.err("cluster block requires a state block", q.cluster.span)
            self.check_cluster()
        if q.alert is not None:
            q.alert = self.resolve(q.alert)
            t = self.infer(q.alert)
            if t not in ("bool", "unknown"):
                raise self.err(f"alert expression must be boolean, not {t}",
                               _span(q.alert))
        if q.returns is not None:
            self.check_returns()
        return q

    def check_globals(self):
        for g in self.q.globals:
            if g.attr != "agentid":
                raise self.err(f"unsupported global attribute {g.attr!r} "
                               "(only agentid)", g.span)
            if g.op not in ("=", "!="):
                raise self.err(f"global constraints accept = or !=, not {g.op}",
                               g.span)

    def check_patterns(self):
        for p in self.q.patterns:
            if p.alias in self.aliases:
                raise self.err(f"duplicate alias {p.alias!r}", p.span)
            self.aliases.add(p.alias)
            if p.subject.kind != "proc":
                raise self.err("event subjects must be processes", p.subject.span)
            allowed = _OPS_FOR_KIND[p.object.kind]
            for op in p.ops:
                if op not in allowed:
                    raise self.err(
                        f"operation {op!r} not allowed on {p.object.kind} objects",
                        p.span)
            for ep in (p.subject, p.object):
                seen = self.vars.get(ep.var)
                if seen is not None and seen != ep.kind:
                    raise self.err(
                        f"variable {ep.var!r} used as both {seen} and {ep.kind}",
                        ep.span)
                self.vars[ep.var] = ep.kind
        overlap = self.aliases & set(self.vars)
        if overlap:
            name = sorted(overlap)[0]
            raise self.err(f"name {name!r} used as both alias and variable",
                           self.q.span)

    def check_chain(self):
        q = self.q
        if q.chain is not None:
            seen = set()
            for alias in q.chain:
                if alias not in self.aliases:
                    raise self.err(f"unknown alias {alias!r} in with clause", q.span)
                if alias in seen:
                    raise self.err(f"alias {alias!r} repeated in with clause", q.span)
                seen.add(alias)
            if seen != self.aliases:
                missing = sorted(self.aliases - seen)[0]
                raise self.err(
                    f"with clause must order every pattern (missing {missing!r})",
                    q.span)
        elif len(q.patterns) > 1:
            raise self.err("queries with several event patterns need a "
                           "with clause giving their temporal order", q.span)

    def check_window(self) -> Optional[ast.WindowSpec]:
        window = None
        for p in self.q.patterns:
            if p.window is None:
                continue
            if p.window.value <= 0:
                raise self.err("window length must be positive", p.window.span)
            if window is not None:
                raise self.err("only one #time window per query", p.window.span)
            window = p.window
        return window

    def check_state(self):
        st = self.q.state
        if st.depth < 1:
            raise self.err("state history depth must be at least 1", st.span)
        if st.name in self.vars or st.name in self.aliases:
            raise self.err(f"state name {st.name!r} collides with a pattern name",
                           st.span)
        names = set()
        for f in st.fields:
            if f.name in names:
                raise self.err(f"duplicate state field {f.name!r}", f.span)
            names.add(f.name)
            if f.func not in ast.AGG_FUNCS:
                raise self.err(f"unknown aggregate {f.func!r}", f.span)
            base = f.arg.base
            if base in self.aliases:
                if f.arg.attr not in _EVENT_ATTRS:
                    raise self.err(f"unknown event attribute {f.arg.attr!r}",
                                   f.arg.span)
            elif base not in self.vars:
                raise self.err(f"unknown variable {base!r}", f.arg.span)
        for term in st.group_by:
            if term.base not in self.vars:
                raise self.err(f"group by references unknown variable {term.base!r}",
                               term.span)

    def check_invariant(self):
        inv = self.q.invariant
        if inv.train_windows < 1:
            raise self.err("invariant training needs at least one window", inv.span)
        if inv.var in self.vars or inv.var in self.aliases or inv.var == self.state.name:
            raise self.err(f"invariant variable {inv.var!r} collides with another name",
                           inv.span)
        if not isinstance(inv.init, (ast.EmptySetLit, ast.Num, ast.Str)):
            raise self.err("invariant init must be a literal or empty_set",
                           _span(inv.init))
        self.inv_type = self.infer(inv.init)
        inv.update = self.resolve(inv.update)
        t = self.infer(inv.update)
        if t not in (self.inv_type, "unknown"):
            raise self.err(
                f"invariant update yields {t}, but the variable holds {self.inv_type}",
                _span(inv.update))

    def check_cluster(self):
        cl = self.q.cluster
        if cl.distance != "ed":
            raise self.err(f'unknown distance {cl.distance!r} (only "ed")', cl.span)
        m = _METHOD_RE.match(cl.method)
        if not m:
            raise self.err(f"unsupported method {cl.method!r} "
                           '(expected "DBSCAN(eps, minPts)")', cl.span)
        cl.eps = float(m.group(1))
        cl.min_pts = int(m.group(2))
        if cl.eps <= 0:
            raise self.err("DBSCAN eps must be positive", cl.span)
        if cl.min_pts < 1:
            raise self.err("DBSCAN minPts must be at least 1", cl.span)
        self.check_all_agg(cl.points)
        if self.state.field_named(cl.points.fieldname).func == "set":
            raise self.err("cluster points must be numeric, not sets", cl.points.span)

    def check_all_agg(self, node: ast.AllAgg):
        if self.state is None or node.state != self.state.name:
            raise self.err(f"unknown state {node.state!r}", node.span)
        if self.state.field_named(node.fieldname) is None:
            raise self.err(f"state has no field {node.fieldname!r}", node.span)

    def check_returns(self):
        items = []
        for item in self.q.returns.items:
            item = self.resolve(item)
            if isinstance(item, ast.StateAccess):
                self.check_state_access(item)
            elif isinstance(item, ast.AttrAccess):
                if self.q.is_stateful:
                    if not any(t.base == item.base and t.attr == item.attr
                               for t in self.q.state.group_by):
                        raise self.err(
                            f"return item {_attr_text(item)} must be a group by key "
                            "in windowed queries", item.span)
                elif item.base not in self.vars and item.base not in self.aliases:
                    raise self.err(f"unknown variable {item.base!r}", item.span)
            items.append(item)
        self.q.returns.items = items

    def check_state_access(self, node: ast.StateAccess):
        if self.state is None:
            raise self.err("state access without a state block", node.span)
        if node.state != self.state.name:
            raise self.err(f"unknown state {node.state!r}", node.span)
        if not 0 <= node.index < self.state.depth:
            raise self.err(
                f"history index {node.index} out of range for state[{self.state.depth}]",
                node.span)
        if self.state.field_named(node.fieldname) is None:
            raise self.err(f"state has no field {node.fieldname!r}", node.span)

    # --- expression resolution and typing ------------------------------------

    def resolve(self, node):
        """Rewrite state-variable attribute accesses into state accesses."""
        if isinstance(node, ast.AttrAccess):
            if self.state is not None and node.base == self.state.name:
                if node.attr is None:
                    raise self.err("state variable needs a field access", node.span)
                return ast.StateAccess(node.base, 0, node.attr, span=node.span)
            return node
        if isinstance(node, ast.Bin):
            return ast.Bin(node.op, self.resolve(node.left), self.resolve(node.right),
                           span=node.span)
        if isinstance(node, ast.Unary):
            return ast.Unary(node.op, self.resolve(node.operand), span=node.span)
        if isinstance(node, ast.Card):
            return ast.Card(self.resolve(node.operand), span=node.span)
        return node

    def infer(self, node) -> str:
        if isinstance(node, ast.Num):
            return "number"
        if isinstance(node, ast.Str):
            return "string"
        if isinstance(node, ast.EmptySetLit):
            return "set"
        if isinstance(node, ast.VarRef):
            if self.invariant is None or node.name != self.invariant.var:
                raise self.err(f"unknown name {node.name!r}", node.span)
            return self.inv_type or "unknown"
        if isinstance(node, ast.AttrAccess):
            if self.q.is_stateful:
                raise self.err(
                    f"{_attr_text(node)}: raw attributes are not available in "
                    "windowed alerts (use state fields)", node.span)
            if node.base not in self.vars and node.base not in self.aliases:
                raise self.err(f"unknown variable {node.base!r}", node.span)
            return "unknown"
        if isinstance(node, ast.StateAccess):
            self.check_state_access(node)
            return "set" if self.state.field_named(node.fieldname).func == "set" \
                else "number"
        if isinstance(node, ast.AllAgg):
            self.check_all_agg(node)
            return "vector"
        if isinstance(node, ast.ClusterOutlier):
            if self.q.cluster is None:
                raise self.err("cluster.outlier requires a cluster block", node.span)
            return "bool"
        if isinstance(node, ast.Card):
            t = self.infer(node.operand)
            if t not in ("set", "vector", "unknown"):
                raise self.err(f"cardinality of {t} value", node.span)
            return "number"
        if isinstance(node, ast.Unary):
            t = self.infer(node.operand)
            want = "bool" if node.op == "!" else "number"
            if t not in (want, "unknown"):
                raise self.err(f"{node.op} applied to {t} value", node.span)
            return want
        if isinstance(node, ast.Bin):
            lt = self.infer(node.left)
            rt = self.infer(node.right)
            return self.infer_bin(node, lt, rt)
        raise self.err("unsupported expression", _span(node))

    def infer_bin(self, node: ast.Bin, lt: str, rt: str) -> str:
        op = node.op
        if op in ("&&", "||"):
            for t in (lt, rt):
                if t not in ("bool", "unknown"):
                    raise self.err(f"{op} applied to {t} value", node.span)
            return "bool"
        if op in ("+", "-", "*", "/"):
            for t in (lt, rt):
                if t not in ("number", "unknown"):
                    raise self.err(f"arithmetic on {t} value", node.span)
            return "number"
        if op in ("union", "diff"):
            for t in (lt, rt):
                if t not in ("set", "unknown"):
                    raise self.err(f"{op} applied to {t} value", node.span)
            return "set"
        # comparison
        for t in (lt, rt):
            if t in ("vector", "bool"):
                raise self.err(f"cannot compare {t} values", node.span)
        if "unknown" not in (lt, rt) and lt != rt:
            raise self.err(f"cannot compare {lt} with {rt}", node.span)
        return "bool"


def _span(node):
    return getattr(node, "span", None)


def _attr_text(node: ast.AttrAccess) -> str:
    return node.base if node.attr is None else f"{node.base}.{node.attr}"


def validate(q: ast.Query) -> ast.Query:
    return _Checker(q).run()
