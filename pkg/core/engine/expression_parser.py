# core/engine/expression_parser.py
#
# Two small grammars: whitelisted angle expressions ("5*pi/12") and Bell
# expression files. Nothing here ever reaches Python's eval().

import math
import os
from functools import lru_cache
from typing import Dict, Tuple

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedEOF, UnexpectedInput, VisitError

from .bell_engine import BellExpression, Monomial, PARTY_NAMES

# 1. Grammar files live next to this module
script_dir = os.path.dirname(__file__)


def _load_grammar(name: str) -> str:
    with open(os.path.join(script_dir, name), 'r', encoding='utf-8') as f:
        return f.read()


# 2. Parser instances, built once
angle_parser = Lark(_load_grammar('angle_grammar.lark'), start='expression', parser='lalr')
bell_expression_parser = Lark(
    _load_grammar('bell_expression_grammar.lark'), start='start', parser='lalr', maybe_placeholders=False
)


class ExpressionParseError(ValueError):
    """Malformed angle expression or Bell expression file; line/column are 1-based, 0 when unknown."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        location = f" (line {line}, column {column})" if line > 0 else ""
        super().__init__(f"{message}{location}")


def _from_lark_error(e: UnexpectedInput, what: str) -> ExpressionParseError:
    if isinstance(e, UnexpectedEOF):
        return ExpressionParseError(f"Unexpected end of {what}")
    line = max(getattr(e, 'line', 0) or 0, 0)
    column = max(getattr(e, 'column', 0) or 0, 0)
    return ExpressionParseError(f"Syntax error in {what}", line, column)


# --- Angle expressions ---

@lru_cache(maxsize=1024)
def cached_parse(expression_string: str):
    return angle_parser.parse(expression_string)


@v_args(inline=True)
class AngleInterpreter(Transformer):
    def number(self, token):
        return float(token)

    def pi(self, _token):
        return math.pi

    def negate(self, _sub, value):
        return -value

    def unary(self, _add, value):
        return value

    def binary(self, left, op_token, right):
        op = op_token.type
        if op == 'ADD':
            return left + right
        if op == 'SUB':
            return left - right
        if op == 'MUL':
            return left * right
        if right == 0:
            raise ZeroDivisionError("division by zero")
        return left / right


def parse_angle(expression_string: str) -> float:
    """Evaluate a whitelisted angle expression to radians."""
    if not isinstance(expression_string, str) or not expression_string.strip():
        raise ExpressionParseError("Empty angle expression")
    try:
        tree = cached_parse(expression_string.strip())
    except UnexpectedInput as e:
        raise _from_lark_error(e, f"angle expression '{expression_string}'")
    try:
        value = AngleInterpreter().transform(tree)
    except VisitError as e:
        raise ExpressionParseError(f"Cannot evaluate '{expression_string}': {e.orig_exc}")
    if not math.isfinite(value):
        raise ExpressionParseError(f"Angle '{expression_string}' is not finite")
    return float(value)


# --- Bell expression files ---

class _SemanticError(Exception):
    def __init__(self, message: str, token: Token):
        super().__init__(message)
        self.token = token


@v_args(inline=True)
class BellExpressionBuilder(Transformer):
    def factor(self, party, setting):
        return (party, setting)

    def term(self, coefficient, *factors) -> Tuple[Monomial, int]:
        slots = [0, 0, 0]
        for party, setting in factors:
            k = PARTY_NAMES.index(str(party))
            if slots[k]:
                raise _SemanticError(f"Party {party} appears twice in one term", party)
            slots[k] = int(setting)
        return tuple(slots), int(coefficient)

    def start(self, *terms) -> Dict[Monomial, int]:
        merged: Dict[Monomial, int] = {}
        for monomial, coefficient in terms:
            merged[monomial] = merged.get(monomial, 0) + coefficient
        return merged


def parse_bell_expression(text: str, name: str = "custom") -> BellExpression:
    try:
        tree = bell_expression_parser.parse(text)
    except UnexpectedInput as e:
        raise _from_lark_error(e, "Bell expression")
    try:
        terms = BellExpressionBuilder().transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, _SemanticError):
            token = e.orig_exc.token
            raise ExpressionParseError(str(e.orig_exc), token.line, token.column)
        raise ExpressionParseError(f"Invalid Bell expression: {e.orig_exc}")
    if not terms:
        raise ExpressionParseError("Bell expression has no terms")
    return BellExpression(terms={m: c for m, c in terms.items() if c != 0}, name=name)


def load_bell_expression(file_path: str) -> BellExpression:
    """Read and parse a Bell expression file."""
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            text = f.read()
    except FileNotFoundError:
        raise ExpressionParseError(f"The file could not be found at path: {file_path}")
    except UnicodeDecodeError as e:
        raise ExpressionParseError(f"Failed to decode file using UTF-8 (Check file encoding): {e}")
    name = os.path.splitext(os.path.basename(file_path))[0]
    return parse_bell_expression(text, name=name)
