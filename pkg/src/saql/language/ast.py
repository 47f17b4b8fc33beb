"""AST node types for the anomaly query language.

Every node carries a source span (excluded from equality, so two parses of
equivalent text compare structurally equal regardless of layout).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Union

UNIT_MS = {"sec": 1_000, "min": 60_000, "hour": 3_600_000}

AGG_FUNCS = ("avg", "sum", "count", "min", "max", "set")


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


def _span_field():
    return field(default=None, compare=False, repr=False, kw_only=True)


@dataclass
class Literal:
    value: Union[int, str]
    span: Optional[Span] = _span_field()

    @property
    def is_wildcard(self) -> bool:
        return isinstance(self.value, str) and "%" in self.value


# ---------------------------------------------------------------- expressions

@dataclass
class Num:
    value: int
    span: Optional[Span] = _span_field()


@dataclass
class Str:
    value: str
    span: Optional[Span] = _span_field()


@dataclass
class EmptySetLit:
    span: Optional[Span] = _span_field()


@dataclass
class VarRef:
    name: str
    span: Optional[Span] = _span_field()


@dataclass
class AttrAccess:
    """`base.attr`, or a bare `base` when attr is None (return items only)."""

    base: str
    attr: Optional[str]
    span: Optional[Span] = _span_field()


@dataclass
class StateAccess:
    """`ss[k].field`; bare `ss.field` is normalized to k=0 at parse time."""

    state: str
    index: int
    fieldname: str
    span: Optional[Span] = _span_field()


@dataclass
class AllAgg:
    """`all(ss.field)`: the field value gathered across every group."""

    state: str
    fieldname: str
    span: Optional[Span] = _span_field()


@dataclass
class ClusterOutlier:
    span: Optional[Span] = _span_field()


@dataclass
class Card:
    operand: "Expr"
    span: Optional[Span] = _span_field()


@dataclass
class Unary:
    op: str  # "!" or "-"
    operand: "Expr"
    span: Optional[Span] = _span_field()


@dataclass
class Bin:
    op: str  # && || = != < <= > >= + - * / union diff
    left: "Expr"
    right: "Expr"
    span: Optional[Span] = _span_field()


Expr = Union[Num, Str, EmptySetLit, VarRef, AttrAccess, StateAccess, AllAgg,
             ClusterOutlier, Card, Unary, Bin]


# ------------------------------------------------------------------- patterns

@dataclass
class Constraint:
    """`attr cmp literal`; attr None means the kind's default attribute."""

    attr: Optional[str]
    op: str
    value: Literal
    span: Optional[Span] = _span_field()


@dataclass
class ConstraintBool:
    op: str  # && or ||
    left: "ConstraintExpr"
    right: "ConstraintExpr"
    span: Optional[Span] = _span_field()


ConstraintExpr = Union[Constraint, ConstraintBool]


@dataclass
class EntityPattern:
    kind: str  # proc | file | ip (surface keyword)
    var: str
    constraint: Optional[ConstraintExpr]
    span: Optional[Span] = _span_field()


@dataclass
class WindowSpec:
    value: int
    unit: str  # sec | min | hour
    span: Optional[Span] = _span_field()

    @property
    def length_ms(self) -> int:
        return self.value * UNIT_MS[self.unit]


@dataclass
class EventPattern:
    subject: EntityPattern
    ops: list  # list[str], operation keywords in source order
    object: EntityPattern
    alias: str
    window: Optional[WindowSpec]
    span: Optional[Span] = _span_field()


@dataclass
class GlobalConstraint:
    attr: str
    op: str  # = or !=
    value: Literal
    span: Optional[Span] = _span_field()


# --------------------------------------------------------------------- blocks

@dataclass
class StateField:
    name: str
    func: str  # avg | sum | count | min | max | set
    arg: AttrAccess
    span: Optional[Span] = _span_field()


@dataclass
class GroupTerm:
    base: str
    attr: Optional[str]
    span: Optional[Span] = _span_field()


@dataclass
class StateBlock:
    depth: int  # N from state[N]; 1 when omitted
    name: str  # the state variable, e.g. "ss"
    fields: list  # list[StateField]
    group_by: list  # list[GroupTerm]
    span: Optional[Span] = _span_field()

    def field_named(self, name: str) -> Optional[StateField]:
        for f in self.fields:
            if f.name == name:
                return f
        return None


@dataclass
class InvariantBlock:
    train_windows: int
    mode: str  # offline | online
    var: str
    init: Expr
    update: Expr
    span: Optional[Span] = _span_field()


@dataclass
class ClusterBlock:
    points: AllAgg
    distance: str  # only "ed"
    method: str  # raw descriptor, e.g. DBSCAN(100000, 5)
    eps: float = field(default=0.0, compare=False)
    min_pts: int = field(default=0, compare=False)
    span: Optional[Span] = _span_field()


@dataclass
class ReturnList:
    distinct: bool
    items: list  # list[AttrAccess | StateAccess]
    span: Optional[Span] = _span_field()


@dataclass
class Query:
    globals: list  # list[GlobalConstraint]
    patterns: list  # list[EventPattern]
    chain: Optional[list]  # list[str] of aliases, temporal order
    state: Optional[StateBlock]
    invariant: Optional[InvariantBlock]
    cluster: Optional[ClusterBlock]
    alert: Optional[Expr]
    returns: Optional[ReturnList]
    span: Optional[Span] = _span_field()

    @property
    def window(self) -> Optional[WindowSpec]:
        for p in self.patterns:
            if p.window is not None:
                return p.window
        return None

    @property
    def is_stateful(self) -> bool:
        return self.state is not None

    @property
    def kind(self) -> str:
        """Anomaly model class: rule | timeseries | invariant | outlier."""
        if self.cluster is not None:
            return "outlier"
        if self.invariant is not None:
            return "invariant"
        if self.state is not None:
            return "timeseries"
        return "rule"

    def pattern_by_alias(self, alias: str) -> Optional[EventPattern]:
        for p in self.patterns:
            if p.alias == alias:
                return p
        return None


def to_dict(node):
    """Span-free dict form of any AST node, for goldens and diagnostics."""
    if dataclasses.is_dataclass(node) and not isinstance(node, type):
        out = {"node": type(node).__name__}
        for f in dataclasses.fields(node):
            if f.name == "span" or not f.compare:
                continue
            out[f.name] = to_dict(getattr(node, f.name))
        return out
    if isinstance(node, list):
        return [to_dict(x) for x in node]
    return node
