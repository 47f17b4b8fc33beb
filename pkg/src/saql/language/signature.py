"""Structural query signatures, the input to concurrent-query grouping.

A signature abstracts away variable names, aliases, layout and literal
formatting, keeping exactly what grouping decisions need: the window
length, the per-pattern skeleton (subject kind, operation set, object
kind), the temporal-chain shape, and the normalized constraint sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Optional, Tuple

from saql.language import ast

_DEFAULT_ATTR = {"proc": "exe_name", "file": "name", "ip": "dstip"}

Triple = Tuple[str, str, object]  # (attribute, comparator, literal)


@dataclass(frozen=True)
class ConstraintSet:
    """Normalized bracket constraints of one entity pattern.

    `conjunction` holds the (attr, cmp, literal) triples when the
    constraint expression is a pure conjunction, which is the form
    implication checks understand; anything with `||` keeps only a
    canonical text form and participates in grouping by equality.
    """

    conjunction: Optional[FrozenSet[Triple]]
    canonical: str

    @staticmethod
    def empty() -> "ConstraintSet":
        return ConstraintSet(frozenset(), "")


@dataclass(frozen=True)
class QuerySignature:
    window_ms: Optional[int]
    patterns: Tuple[Tuple[str, FrozenSet[str], str], ...]
    chain: Tuple[int, ...]
    globals: FrozenSet[Triple]
    constraints: Tuple[Tuple[ConstraintSet, ConstraintSet], ...]  # (subject, object)


def _norm_constraint(node: ast.ConstraintExpr, kind: str):
    """Flatten to triples if pure conjunction, else None."""
    if isinstance(node, ast.Constraint):
        attr = node.attr if node.attr is not None else _DEFAULT_ATTR[kind]
        return [(attr, node.op, node.value.value)]
    if node.op == "&&":
        left = _norm_constraint(node.left, kind)
        right = _norm_constraint(node.right, kind)
        if left is not None and right is not None:
            return left + right
    return None


def _canonical_text(node: ast.ConstraintExpr, kind: str) -> str:
    if isinstance(node, ast.Constraint):
        attr = node.attr if node.attr is not None else _DEFAULT_ATTR[kind]
        return f"{attr}{node.op}{node.value.value!r}"
    parts = sorted([_canonical_text(node.left, kind),
                    _canonical_text(node.right, kind)])
    return f"({parts[0]} {node.op} {parts[1]})"


def _constraint_set(ep: ast.EntityPattern) -> ConstraintSet:
    if ep.constraint is None:
        return ConstraintSet.empty()
    conj = _norm_constraint(ep.constraint, ep.kind)
    if conj is not None:
        triples = frozenset(conj)
        return ConstraintSet(triples, ";".join(sorted(map(repr, triples))))
    return ConstraintSet(None, _canonical_text(ep.constraint, ep.kind))


def signature(q: ast.Query) -> QuerySignature:
    window = q.window
    patterns = tuple((p.subject.kind, frozenset(p.ops), p.object.kind)
                     for p in q.patterns)
    alias_index = {p.alias: i for i, p in enumerate(q.patterns)}
    if q.chain is not None:
        chain = tuple(alias_index[a] for a in q.chain)
    else:
        chain = tuple(range(len(q.patterns)))
    globs = frozenset((g.attr, g.op, g.value.value) for g in q.globals)
    constraints = tuple((_constraint_set(p.subject), _constraint_set(p.object))
                        for p in q.patterns)
    return QuerySignature(
        window_ms=window.length_ms if window is not None else None,
        patterns=patterns, chain=chain, globals=globs, constraints=constraints)
