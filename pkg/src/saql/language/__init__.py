"""Query language: lexer, parser, validator, printer, signatures."""

from saql.language import ast
from saql.language.errors import QueryError, SaqlSyntaxError, ValidationError
from saql.language.parser import parse_raw
from saql.language.printer import pretty_print
from saql.language.signature import QuerySignature, signature
from saql.language.validate import validate


def parse(text: str) -> ast.Query:
    """Parse and validate query text into a resolved AST."""
    return validate(parse_raw(text))


__all__ = [
    "ast",
    "parse",
    "parse_raw",
    "pretty_print",
    "signature",
    "validate",
    "QueryError",
    "QuerySignature",
    "SaqlSyntaxError",
    "ValidationError",
]
