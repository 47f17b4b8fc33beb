"""Alert expression evaluation, invariant training, and return projection.

Values are plain Python scalars plus frozensets for set aggregates and an
ABSENT sentinel for missing data (empty averages, history that does not
reach back far enough, groups absent from a past window).  ABSENT
propagates through arithmetic and set algebra; any comparison against it
is false, so alerts never fire on missing evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from saql.language import ast


class _Absent:
    __slots__ = ()

    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        return False


ABSENT = _Absent()


class EvalTypeError(TypeError):
    """Runtime type mismatch; validation should have prevented it."""


@dataclass
class EvalContext:
    """What an alert expression can see for one group of one closed window."""

    state: Callable[[int, str], object] = lambda k, f: ABSENT
    all_values: Callable[[str], tuple] = lambda f: ()
    invariant: object = ABSENT
    outlier: bool = False
    attr: Callable[[str, Optional[str]], object] = lambda b, a: ABSENT


def _truthy(v) -> bool:
    if v is ABSENT:
        return False
    if isinstance(v, bool):
        return v
    raise EvalTypeError(f"expected boolean, got {type(v).__name__}")


def _arith(op: str, a, b):
    if a is ABSENT or b is ABSENT:
        return ABSENT
    for v in (a, b):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise EvalTypeError(f"arithmetic on {type(v).__name__}")
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0:
        return ABSENT  # division by zero reads as missing data
    return a / b


def _compare(op: str, a, b) -> bool:
    if a is ABSENT or b is ABSENT:
        return False
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if isinstance(a, bool) or isinstance(b, bool):
        raise EvalTypeError("ordering booleans")
    if isinstance(a, (int, float)) != isinstance(b, (int, float)):
        return False  # mixed-type ordering is never true
    try:
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b
    except TypeError:
        return False


def _setop(op: str, a, b):
    if a is ABSENT or b is ABSENT:
        return ABSENT
    if not isinstance(a, frozenset) or not isinstance(b, frozenset):
        raise EvalTypeError(f"{op} on non-set values")
    return a | b if op == "union" else a - b


def eval_expr(node, ctx: EvalContext):
    kind = type(node)
    if kind is ast.Bin:
        op = node.op
        if op == "&&":
            return _truthy(eval_expr(node.left, ctx)) and \
                _truthy(eval_expr(node.right, ctx))
        if op == "||":
            return _truthy(eval_expr(node.left, ctx)) or \
                _truthy(eval_expr(node.right, ctx))
        left = eval_expr(node.left, ctx)
        right = eval_expr(node.right, ctx)
        if op in ("+", "-", "*", "/"):
            return _arith(op, left, right)
        if op in ("union", "diff"):
            return _setop(op, left, right)
        return _compare(op, left, right)
    if kind is ast.StateAccess:
        return ctx.state(node.index, node.fieldname)
    if kind is ast.Num:
        return node.value
    if kind is ast.Str:
        return node.value
    if kind is ast.Card:
        v = eval_expr(node.operand, ctx)
        if v is ABSENT:
            return ABSENT
        if isinstance(v, (frozenset, tuple)):
            return len(v)
        raise EvalTypeError("cardinality of non-set value")
    if kind is ast.Unary:
        v = eval_expr(node.operand, ctx)
        if node.op == "!":
            return not _truthy(v)
        if v is ABSENT:
            return ABSENT
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise EvalTypeError("negating non-number")
        return -v
    if kind is ast.VarRef:
        return ctx.invariant
    if kind is ast.EmptySetLit:
        return frozenset()
    if kind is ast.AllAgg:
        return tuple(ctx.all_values(node.fieldname))
    if kind is ast.ClusterOutlier:
        return ctx.outlier
    if kind is ast.AttrAccess:
        return ctx.attr(node.base, node.attr)
    raise EvalTypeError(f"cannot evaluate {kind.__name__}")


# ----------------------------------------------------------------- invariants

@dataclass
class InvariantState:
    var: str
    value: object
    mode: str
    train_windows: int
    trained_count: int = 0

    @property
    def trained(self) -> bool:
        return self.trained_count >= self.train_windows

    @staticmethod
    def fresh(block: ast.InvariantBlock) -> "InvariantState":
        init = eval_expr(block.init, EvalContext())
        return InvariantState(block.var, init, block.mode, block.train_windows)


def _fold_update(inv: InvariantState, block: ast.InvariantBlock, contexts):
    for ctx in contexts:
        ctx.invariant = inv.value
        inv.value = eval_expr(block.update, ctx)


def invariant_step(inv: InvariantState, block: ast.InvariantBlock,
                   contexts) -> bool:
    """Run the pre-alert half for one closed window.

    During training the update statement folds over every group's state
    and alerts stay suppressed, including for the window that completes
    training; detection starts the following window.  Returns whether
    alerts are active for this window.
    """
    if inv.trained:
        return True
    _fold_update(inv, block, contexts)
    inv.trained_count += 1
    return False


def invariant_post_update(inv: InvariantState, block: ast.InvariantBlock,
                          contexts):
    """Online mode keeps folding after each window's alerts went out."""
    if inv.mode == "online":
        _fold_update(inv, block, contexts)


# ------------------------------------------------------------------ alerts

@dataclass(frozen=True)
class Alert:
    query: str
    kind: str  # rule | timeseries | invariant | outlier
    window: Optional[int]
    group: Optional[tuple]
    values: tuple
    ts: int

    def to_wire(self) -> dict:
        return {"query": self.query, "kind": self.kind, "window": self.window,
                "group": list(self.group) if self.group is not None else None,
                "values": [value_to_json(v) for v in self.values],
                "ts": self.ts}


def value_to_json(v):
    if v is ABSENT:
        return None
    if isinstance(v, frozenset):
        return sorted(v, key=lambda x: (type(x).__name__, x))
    if isinstance(v, tuple):
        return [value_to_json(x) for x in v]
    return v


def project_return(items, resolve) -> tuple:
    """Resolve each return item via the caller-supplied lookup."""
    return tuple(resolve(item) for item in items)
