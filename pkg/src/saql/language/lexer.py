"""Tokenizer for the query language."""

from __future__ import annotations

from dataclasses import dataclass

from saql.language.errors import SaqlSyntaxError

# Longest first so "&&" wins over "&" (which is not a token at all).
_PUNCT = ("&&", "||", "->", ":=", "!=", "<=", ">=",
          "[", "]", "{", "}", "(", ")", ",", "=", "<", ">",
          "|", "!", "#", ".", "+", "-", "*", "/")

IDENT = "IDENT"
INT = "INT"
STRING = "STRING"
EOF = "EOF"

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}
_UNESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def escape_string(value: str) -> str:
    return '"' + "".join(_UNESCAPES.get(c, c) for c in value) + '"'


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, INT, STRING, EOF, or the punct text itself
    value: object
    line: int
    col: int
    end_col: int

    def __str__(self) -> str:
        if self.kind == EOF:
            return "end of input"
        return repr(self.value if self.kind in (IDENT, INT) else
                    self.value if self.kind == STRING else self.kind)


def _is_ident_start(c: str) -> bool:
    return c.isalpha() or c == "_"


def _is_ident(c: str) -> bool:
    return c.isalnum() or c == "_"


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    line_start = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
            line_start = i
            continue
        if c in " \t\r":
            i += 1
            continue
        col = i - line_start + 1
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if _is_ident_start(c):
            j = i + 1
            while j < n and _is_ident(text[j]):
                j += 1
            word = text[i:j]
            tokens.append(Token(IDENT, word, line, col, col + (j - i)))
            i = j
            continue
        if c.isdigit():
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token(INT, int(text[i:j]), line, col, col + (j - i)))
            i = j
            continue
        if c == '"':
            j = i + 1
            out = []
            while True:
                if j >= n or text[j] == "\n":
                    raise SaqlSyntaxError(line, col, ("closing '\"'",), "end of line")
                ch = text[j]
                if ch == '"':
                    j += 1
                    break
                if ch == "\\":
                    if j + 1 >= n or text[j + 1] not in _ESCAPES:
                        raise SaqlSyntaxError(line, j - line_start + 2,
                                              ("escape character",),
                                              text[j + 1:j + 2] or "end of input")
                    out.append(_ESCAPES[text[j + 1]])
                    j += 2
                    continue
                out.append(ch)
                j += 1
            tokens.append(Token(STRING, "".join(out), line, col, j - line_start + 1))
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(Token(p, p, line, col, col + len(p)))
                i += len(p)
                break
        else:
            raise SaqlSyntaxError(line, col, ("token",), repr(c))
    end_col = n - line_start + 1
    tokens.append(Token(EOF, None, line, end_col, end_col))
    return tokens
