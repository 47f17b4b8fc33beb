"""Recursive-descent parser producing a raw (unvalidated) query AST.

The grammar is newline-insensitive: every clause opens with a distinctive
keyword (`proc`/`file`/`ip` for event patterns, then `with`, `state`,
`invariant`, `cluster`, `alert`, `return`), and anything else at clause
level is read as a global attribute constraint such as `agentid = "db01"`.
"""

from __future__ import annotations

from typing import Optional

from saql.language import ast
from saql.language.errors import SaqlSyntaxError
from saql.language.lexer import EOF, IDENT, INT, STRING, Token, tokenize

_KINDS = ("proc", "file", "ip")
_OPS = ("read", "write", "execute", "start", "end", "rename", "delete")
_UNITS = ("sec", "min", "hour")
_CMP = ("=", "!=", "<", "<=", ">", ">=")

_CLAUSE_EXPECTED = ("'proc'", "'with'", "'state'", "'invariant'", "'cluster'",
                    "'alert'", "'return'", "global constraint")


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # --- token plumbing ---------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def at(self, kind: str, value=None) -> bool:
        tok = self.peek()
        if tok.kind != kind:
            return False
        return value is None or tok.value == value

    def at_word(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == IDENT and tok.value in words

    def expect(self, kind: str, what: Optional[str] = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise SaqlSyntaxError(tok.line, tok.col, (what or f"'{kind}'",), str(tok))
        return self.next()

    def expect_word(self, *words: str) -> Token:
        tok = self.peek()
        if tok.kind != IDENT or tok.value not in words:
            raise SaqlSyntaxError(tok.line, tok.col,
                                  tuple(f"'{w}'" for w in words), str(tok))
        return self.next()

    def fail(self, expected: tuple) -> SaqlSyntaxError:
        tok = self.peek()
        return SaqlSyntaxError(tok.line, tok.col, expected, str(tok))

    def span_from(self, start: Token) -> ast.Span:
        prev = self.tokens[max(self.pos - 1, 0)]
        return ast.Span(start.line, start.col, prev.line, prev.end_col)

    # --- query ------------------------------------------------------------

    def parse_query(self) -> ast.Query:
        start = self.peek()
        globs: list = []
        patterns: list = []
        chain = None
        state = invariant = cluster = alert = returns = None
        while not self.at(EOF):
            tok = self.peek()
            if tok.kind != IDENT:
                raise self.fail(_CLAUSE_EXPECTED)
            word = tok.value
            if word in _KINDS:
                patterns.append(self.event_pattern())
            elif word == "with":
                chain = self.chain(replaces=chain)
            elif word == "state":
                state = self.state_block(replaces=state)
            elif word == "invariant":
                invariant = self.invariant_block(replaces=invariant)
            elif word == "cluster":
                cluster = self.cluster_block(replaces=cluster)
            elif word == "alert":
                alert = self.alert_clause(replaces=alert)
            elif word == "return":
                returns = self.return_list(replaces=returns)
            elif self.peek(1).kind in ("=", "!="):
                globs.append(self.global_constraint())
            else:
                raise self.fail(_CLAUSE_EXPECTED)
        if not patterns:
            raise self.fail(("at least one event pattern",))
        return ast.Query(globals=globs, patterns=patterns, chain=chain,
                         state=state, invariant=invariant, cluster=cluster,
                         alert=alert, returns=returns, span=self.span_from(start))

    def _no_dup(self, replaces, what: str, tok: Token):
        if replaces is not None:
            raise SaqlSyntaxError(tok.line, tok.col, (f"at most one {what} clause",),
                                  f"'{tok.value}'")

    # --- clauses ----------------------------------------------------------

    def global_constraint(self) -> ast.GlobalConstraint:
        start = self.expect(IDENT, "attribute name")
        op = self.next()  # = or !=, guaranteed by caller lookahead
        value = self.literal()
        return ast.GlobalConstraint(start.value, op.kind, value,
                                    span=self.span_from(start))

    def literal(self) -> ast.Literal:
        tok = self.peek()
        if tok.kind == STRING or tok.kind == INT:
            self.next()
            return ast.Literal(tok.value, span=self.span_from(tok))
        if tok.kind == IDENT:  # bare word literal, e.g. agentid = xxx
            self.next()
            return ast.Literal(tok.value, span=self.span_from(tok))
        raise self.fail(("string", "integer"))

    def event_pattern(self) -> ast.EventPattern:
        start = self.peek()
        subject = self.entity_pattern()
        ops = [self.expect_word(*_OPS).value]
        while self.at("||"):
            self.next()
            ops.append(self.expect_word(*_OPS).value)
        obj = self.entity_pattern()
        self.expect_word("as")
        alias = self.expect(IDENT, "alias name").value
        window = None
        if self.at("#"):
            window = self.window_spec()
        return ast.EventPattern(subject, ops, obj, alias, window,
                                span=self.span_from(start))

    def entity_pattern(self) -> ast.EntityPattern:
        start = self.expect_word(*_KINDS)
        var = self.expect(IDENT, "variable name").value
        constraint = None
        if self.at("["):
            self.next()
            constraint = self.constraint_or()
            self.expect("]")
        return ast.EntityPattern(start.value, var, constraint,
                                 span=self.span_from(start))

    def constraint_or(self) -> ast.ConstraintExpr:
        left = self.constraint_and()
        while self.at("||"):
            tok = self.next()
            right = self.constraint_and()
            left = ast.ConstraintBool("||", left, right,
                                      span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return left

    def constraint_and(self) -> ast.ConstraintExpr:
        left = self.constraint_atom()
        while self.at("&&"):
            tok = self.next()
            right = self.constraint_atom()
            left = ast.ConstraintBool("&&", left, right,
                                      span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return left

    def constraint_atom(self) -> ast.ConstraintExpr:
        if self.at("("):
            self.next()
            inner = self.constraint_or()
            self.expect(")")
            return inner
        start = self.peek()
        if start.kind == STRING:  # bare literal constrains the default attribute
            self.next()
            value = ast.Literal(start.value, span=self.span_from(start))
            return ast.Constraint(None, "=", value, span=self.span_from(start))
        name = self.expect(IDENT, "attribute name")
        tok = self.peek()
        if tok.kind not in _CMP:
            raise self.fail(tuple(f"'{c}'" for c in _CMP))
        self.next()
        value = self.literal()
        return ast.Constraint(name.value, tok.kind, value, span=self.span_from(start))

    def window_spec(self) -> ast.WindowSpec:
        start = self.expect("#")
        self.expect_word("time")
        self.expect("(")
        value = self.expect(INT, "window length").value
        unit = self.expect_word(*_UNITS).value
        self.expect(")")
        return ast.WindowSpec(value, unit, span=self.span_from(start))

    def chain(self, replaces) -> list:
        start = self.expect_word("with")
        self._no_dup(replaces, "with", start)
        aliases = [self.expect(IDENT, "alias name").value]
        while self.at("->"):
            self.next()
            aliases.append(self.expect(IDENT, "alias name").value)
        return aliases

    def state_block(self, replaces) -> ast.StateBlock:
        start = self.expect_word("state")
        self._no_dup(replaces, "state", start)
        depth = 1
        if self.at("["):
            self.next()
            depth = self.expect(INT, "history depth").value
            self.expect("]")
        name = self.expect(IDENT, "state name").value
        self.expect("{")
        fields = [self.state_field()]
        while not self.at("}"):
            fields.append(self.state_field())
        self.expect("}")
        self.expect_word("group")
        self.expect_word("by")
        terms = [self.group_term()]
        while self.at(","):
            self.next()
            terms.append(self.group_term())
        return ast.StateBlock(depth, name, fields, terms, span=self.span_from(start))

    def state_field(self) -> ast.StateField:
        start = self.expect(IDENT, "field name")
        self.expect(":=")
        func = self.expect(IDENT, "aggregate function").value
        self.expect("(")
        base = self.expect(IDENT, "variable name")
        self.expect(".")
        attrname = self.expect(IDENT, "attribute name").value
        arg = ast.AttrAccess(base.value, attrname, span=self.span_from(base))
        self.expect(")")
        return ast.StateField(start.value, func, arg, span=self.span_from(start))

    def group_term(self) -> ast.GroupTerm:
        start = self.expect(IDENT, "variable name")
        attrname = None
        if self.at("."):
            self.next()
            attrname = self.expect(IDENT, "attribute name").value
        return ast.GroupTerm(start.value, attrname, span=self.span_from(start))

    def invariant_block(self, replaces) -> ast.InvariantBlock:
        start = self.expect_word("invariant")
        self._no_dup(replaces, "invariant", start)
        self.expect("[")
        train = self.expect(INT, "training window count").value
        self.expect("]")
        mode = "offline"
        if self.at("["):
            self.next()
            mode = self.expect_word("offline", "online").value
            self.expect("]")
        self.expect("{")
        var = self.expect(IDENT, "invariant variable").value
        self.expect(":=")
        init = self.expr()
        update_var = self.expect(IDENT, "invariant variable")
        self.expect("=")
        update = self.expr()
        self.expect("}")
        if update_var.value != var:
            raise SaqlSyntaxError(update_var.line, update_var.col,
                                  (f"'{var}'",), repr(update_var.value))
        return ast.InvariantBlock(train, mode, var, init, update,
                                  span=self.span_from(start))

    def cluster_block(self, replaces) -> ast.ClusterBlock:
        start = self.expect_word("cluster")
        self._no_dup(replaces, "cluster", start)
        self.expect("(")
        self.expect_word("points")
        self.expect("=")
        all_tok = self.expect_word("all")
        self.expect("(")
        state = self.expect(IDENT, "state name").value
        self.expect(".")
        fieldname = self.expect(IDENT, "field name").value
        self.expect(")")
        points = ast.AllAgg(state, fieldname, span=self.span_from(all_tok))
        self.expect(",")
        self.expect_word("distance")
        self.expect("=")
        distance = self.expect(STRING, "distance id").value
        self.expect(",")
        self.expect_word("method")
        self.expect("=")
        method = self.expect(STRING, "method descriptor").value
        self.expect(")")
        return ast.ClusterBlock(points, distance, method, span=self.span_from(start))

    def alert_clause(self, replaces) -> ast.Expr:
        start = self.expect_word("alert")
        self._no_dup(replaces, "alert", start)
        return self.expr()

    def return_list(self, replaces) -> ast.ReturnList:
        start = self.expect_word("return")
        self._no_dup(replaces, "return", start)
        distinct = False
        if self.at_word("distinct"):
            self.next()
            distinct = True
        items = [self.return_item()]
        while self.at(","):
            self.next()
            items.append(self.return_item())
        return ast.ReturnList(distinct, items, span=self.span_from(start))

    def return_item(self):
        start = self.expect(IDENT, "variable name")
        if self.at("["):
            self.next()
            index = self.expect(INT, "history index").value
            self.expect("]")
            self.expect(".")
            fieldname = self.expect(IDENT, "field name").value
            return ast.StateAccess(start.value, index, fieldname,
                                   span=self.span_from(start))
        attrname = None
        if self.at("."):
            self.next()
            attrname = self.expect(IDENT, "attribute name").value
        return ast.AttrAccess(start.value, attrname, span=self.span_from(start))

    # --- expressions --------------------------------------------------------
    # precedence: ! and |x| bind tightest, then * /, then + - union diff,
    # then comparisons, then &&, then ||.

    def expr(self) -> ast.Expr:
        return self.or_expr()

    def or_expr(self) -> ast.Expr:
        left = self.and_expr()
        while self.at("||"):
            tok = self.next()
            left = ast.Bin("||", left, self.and_expr(),
                           span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return left

    def and_expr(self) -> ast.Expr:
        left = self.cmp_expr()
        while self.at("&&"):
            tok = self.next()
            left = ast.Bin("&&", left, self.cmp_expr(),
                           span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return left

    def cmp_expr(self) -> ast.Expr:
        left = self.add_expr()
        tok = self.peek()
        if tok.kind in _CMP:
            self.next()
            right = self.add_expr()
            return ast.Bin(tok.kind, left, right,
                           span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return left

    def add_expr(self) -> ast.Expr:
        left = self.mul_expr()
        while True:
            tok = self.peek()
            if tok.kind in ("+", "-"):
                self.next()
                left = ast.Bin(tok.kind, left, self.mul_expr(),
                               span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
            elif tok.kind == IDENT and tok.value in ("union", "diff"):
                self.next()
                left = ast.Bin(tok.value, left, self.mul_expr(),
                               span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
            else:
                return left

    def mul_expr(self) -> ast.Expr:
        left = self.unary_expr()
        while self.peek().kind in ("*", "/"):
            tok = self.next()
            left = ast.Bin(tok.kind, left, self.unary_expr(),
                           span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return left

    def unary_expr(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind in ("!", "-"):
            self.next()
            return ast.Unary(tok.kind, self.unary_expr(),
                             span=ast.Span(tok.line, tok.col, tok.line, tok.end_col))
        return self.primary()

    def primary(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind == INT:
            self.next()
            return ast.Num(tok.value, span=self.span_from(tok))
        if tok.kind == STRING:
            self.next()
            return ast.Str(tok.value, span=self.span_from(tok))
        if tok.kind == "(":
            self.next()
            inner = self.or_expr()
            self.expect(")")
            return inner
        if tok.kind == "|":
            self.next()
            inner = self.add_expr()
            self.expect("|", "closing '|'")
            return ast.Card(inner, span=self.span_from(tok))
        if tok.kind == IDENT:
            return self.primary_ident()
        raise self.fail(("expression",))

    def primary_ident(self) -> ast.Expr:
        tok = self.next()
        name = tok.value
        if name == "empty_set":
            return ast.EmptySetLit(span=self.span_from(tok))
        if name == "all" and self.at("("):
            self.next()
            state = self.expect(IDENT, "state name").value
            self.expect(".")
            fieldname = self.expect(IDENT, "field name").value
            self.expect(")")
            return ast.AllAgg(state, fieldname, span=self.span_from(tok))
        if name == "cluster" and self.at("."):
            self.next()
            self.expect_word("outlier")
            return ast.ClusterOutlier(span=self.span_from(tok))
        if self.at("["):
            self.next()
            index = self.expect(INT, "history index").value
            self.expect("]")
            self.expect(".")
            fieldname = self.expect(IDENT, "field name").value
            return ast.StateAccess(name, index, fieldname, span=self.span_from(tok))
        if self.at("."):
            self.next()
            attrname = self.expect(IDENT, "attribute name").value
            return ast.AttrAccess(name, attrname, span=self.span_from(tok))
        return ast.VarRef(name, span=self.span_from(tok))


def parse_raw(text: str) -> ast.Query:
    """Parse without semantic validation (spans populated, nothing resolved)."""
    return _Parser(text).parse_query()
