"""Canonical text form of a query AST; reparses structurally equal."""

from __future__ import annotations

from saql.language import ast
from saql.language.lexer import escape_string

# binding strength, tighter binds higher
_LEVEL = {"||": 0, "&&": 1,
          "=": 2, "!=": 2, "<": 2, "<=": 2, ">": 2, ">=": 2,
          "+": 3, "-": 3, "union": 3, "diff": 3,
          "*": 4, "/": 4}


def _literal(lit: ast.Literal) -> str:
    if isinstance(lit.value, int):
        return str(lit.value)
    return escape_string(lit.value)


def _constraint(node: ast.ConstraintExpr, parent_or: bool = False) -> str:
    if isinstance(node, ast.Constraint):
        if node.attr is None and node.op == "=":
            return _literal(node.value)
        attr = node.attr if node.attr is not None else "default"
        return f"{attr} {node.op} {_literal(node.value)}"
    left = _constraint(node.left, node.op == "||")
    right = _constraint(node.right, node.op == "||")
    text = f"{left} {node.op} {right}"
    if node.op == "&&" and parent_or:
        return f"({text})"
    return text


def _entity(ep: ast.EntityPattern) -> str:
    out = f"{ep.kind} {ep.var}"
    if ep.constraint is not None:
        out += f"[{_constraint(ep.constraint)}]"
    return out


def _expr(node, level: int = 0) -> str:
    if isinstance(node, ast.Num):
        return str(node.value)
    if isinstance(node, ast.Str):
        return escape_string(node.value)
    if isinstance(node, ast.EmptySetLit):
        return "empty_set"
    if isinstance(node, ast.VarRef):
        return node.name
    if isinstance(node, ast.AttrAccess):
        return node.base if node.attr is None else f"{node.base}.{node.attr}"
    if isinstance(node, ast.StateAccess):
        return f"{node.state}[{node.index}].{node.fieldname}"
    if isinstance(node, ast.AllAgg):
        return f"all({node.state}.{node.fieldname})"
    if isinstance(node, ast.ClusterOutlier):
        return "cluster.outlier"
    if isinstance(node, ast.Card):
        return f"|{_expr(node.operand, 3)}|"
    if isinstance(node, ast.Unary):
        return f"{node.op}{_expr(node.operand, 5)}"
    if isinstance(node, ast.Bin):
        mine = _LEVEL[node.op]
        text = f"{_expr(node.left, mine)} {node.op} {_expr(node.right, mine + 1)}"
        if mine < level:
            return f"({text})"
        return text
    raise TypeError(f"not an expression node: {node!r}")


def pretty_print(q: ast.Query) -> str:
    lines: list[str] = []
    for g in q.globals:
        lines.append(f"{g.attr} {g.op} {_literal(g.value)}")
    for p in q.patterns:
        line = f"{_entity(p.subject)} {' || '.join(p.ops)} {_entity(p.object)} as {p.alias}"
        if p.window is not None:
            line += f" #time({p.window.value} {p.window.unit})"
        lines.append(line)
    if q.chain is not None:
        lines.append("with " + " -> ".join(q.chain))
    if q.state is not None:
        st = q.state
        head = f"state[{st.depth}] {st.name}" if st.depth != 1 else f"state {st.name}"
        lines.append(head + " {")
        for f in st.fields:
            arg = f"{f.arg.base}.{f.arg.attr}"
            lines.append(f"  {f.name} := {f.func}({arg})")
        terms = ", ".join(t.base if t.attr is None else f"{t.base}.{t.attr}"
                          for t in st.group_by)
        lines.append("} group by " + terms)
    if q.invariant is not None:
        inv = q.invariant
        lines.append(f"invariant[{inv.train_windows}][{inv.mode}] {{")
        lines.append(f"  {inv.var} := {_expr(inv.init)}")
        lines.append(f"  {inv.var} = {_expr(inv.update)}")
        lines.append("}")
    if q.cluster is not None:
        cl = q.cluster
        lines.append(
            f"cluster(points=all({cl.points.state}.{cl.points.fieldname}), "
            f'distance={escape_string(cl.distance)}, method={escape_string(cl.method)})')
    if q.alert is not None:
        lines.append("alert " + _expr(q.alert))
    if q.returns is not None:
        items = ", ".join(_expr(item) for item in q.returns.items)
        prefix = "return distinct " if q.returns.distinct else "return "
        lines.append(prefix + items)
    return "\n".join(lines) + "\n"
