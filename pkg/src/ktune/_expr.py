"""Constraint expression language: tokenizer, recursive-descent parser, evaluator.

Grammar::

    expr  := or
    or    := and ("||" and)*
    and   := cmp ("&&" cmp)*
    cmp   := sum (("=="|"!="|"<"|"<="|">"|">=") sum)?
    sum   := term (("+"|"-") term)*
    term  := unary (("*"|"/"|"%") unary)*
    unary := "!" unary | "-" unary | "(" expr ")" | integer | string | identifier

Integer division truncates toward zero and ``%`` follows the truncated
quotient, as in C. Parsed expressions are compiled into nested closures so
evaluating a constraint during enumeration does not walk the tree.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .errors import ConstraintSyntaxError, EvaluationError

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<str>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|[<>+\-*/%!()])
    """,
    re.VERBOSE,
)

_COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Token:
    kind: str
    value: Any
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ConstraintSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        raw = m.group()
        if kind == "int":
            tokens.append(Token("int", int(raw), pos))
        elif kind == "str":
            body = raw[1:-1]
            tokens.append(Token("str", re.sub(r"\\(.)", r"\1", body), pos))
        elif kind == "name":
            tokens.append(Token("name", raw, pos))
        elif kind == "op":
            tokens.append(Token("op", raw, pos))
        pos = m.end()
    tokens.append(Token("eof", None, len(text)))
    return tokens


# AST nodes are plain tuples: ("int", v) ("str", v) ("name", n) ("not", x)
# ("neg", x) ("arith", op, l, r) ("cmp", op, l, r) ("and", l, r) ("or", l, r)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept(self, *ops: str) -> str | None:
        tok = self.peek()
        if tok.kind == "op" and tok.value in ops:
            self.i += 1
            return tok.value
        return None

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ConstraintSyntaxError(message, tok.pos, self.text)

    def parse(self):
        if self.peek().kind == "eof":
            self.fail("empty expression")
        node = self.expr()
        if self.peek().kind != "eof":
            self.fail(f"unexpected token {self.peek().value!r}")
        return node

    def expr(self):
        return self.or_()

    def or_(self):
        node = self.and_()
        while self.accept("||"):
            node = ("or", node, self.and_())
        return node

    def and_(self):
        node = self.cmp()
        while self.accept("&&"):
            node = ("and", node, self.cmp())
        return node

    def cmp(self):
        node = self.sum()
        op = self.accept(*_COMPARISONS)
        if op:
            node = ("cmp", op, node, self.sum())
            if self.peek().kind == "op" and self.peek().value in _COMPARISONS:
                self.fail("chained comparison")
        return node

    def sum(self):
        node = self.term()
        while True:
            op = self.accept("+", "-")
            if not op:
                return node
            node = ("arith", op, node, self.term())

    def term(self):
        node = self.unary()
        while True:
            op = self.accept("*", "/", "%")
            if not op:
                return node
            node = ("arith", op, node, self.unary())

    def unary(self):
        if self.accept("!"):
            return ("not", self.unary())
        if self.accept("-"):
            return ("neg", self.unary())
        if self.accept("("):
            node = self.expr()
            if not self.accept(")"):
                self.fail("expected ')'")
            return node
        tok = self.take()
        if tok.kind == "int":
            return ("int", tok.value)
        if tok.kind == "str":
            return ("str", tok.value)
        if tok.kind == "name":
            return ("name", tok.value)
        if tok.kind == "eof":
            self.fail("unexpected end of expression", tok)
        self.fail(f"unexpected token {tok.value!r}", tok)


def parse(text: str):
    return _Parser(text).parse()


def names(node) -> set[str]:
    kind = node[0]
    if kind == "name":
        return {node[1]}
    if kind in ("int", "str"):
        return set()
    if kind in ("not", "neg"):
        return names(node[1])
    if kind in ("arith", "cmp"):
        return names(node[2]) | names(node[3])
    return names(node[1]) | names(node[2])


def _int(v, op):
    if isinstance(v, str):
        raise EvaluationError(f"type mismatch: string {v!r} used with '{op}'")
    return int(v)


def _truth(v, op):
    if isinstance(v, str):
        raise EvaluationError(f"type mismatch: string {v!r} used as condition of '{op}'")
    return bool(v)


def trunc_div(a: int, b: int) -> int:
    if b == 0:
        raise EvaluationError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def trunc_mod(a: int, b: int) -> int:
    return a - b * trunc_div(a, b)


_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": trunc_div,
    "%": trunc_mod,
}

_ORDER = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _compare(op, a, b):
    if op == "==" or op == "!=":
        a_str, b_str = isinstance(a, str), isinstance(b, str)
        equal = a == b if a_str == b_str else False
        return equal if op == "==" else not equal
    if isinstance(a, str) != isinstance(b, str):
        raise EvaluationError(f"type mismatch: cannot order {a!r} and {b!r} with '{op}'")
    return _ORDER[op](a, b)


def compile_node(node) -> Callable[[Mapping[str, Any]], Any]:
    """Turn an AST into a closure ``env -> value``."""
    kind = node[0]
    if kind in ("int", "str"):
        value = node[1]
        return lambda env: value
    if kind == "name":
        key = node[1]
        return lambda env: env[key]
    if kind == "not":
        inner = compile_node(node[1])
        return lambda env: not _truth(inner(env), "!")
    if kind == "neg":
        inner = compile_node(node[1])
        return lambda env: -_int(inner(env), "-")
    if kind == "arith":
        op, fn = node[1], _ARITH[node[1]]
        left, right = compile_node(node[2]), compile_node(node[3])
        return lambda env: fn(_int(left(env), op), _int(right(env), op))
    if kind == "cmp":
        op = node[1]
        left, right = compile_node(node[2]), compile_node(node[3])
        return lambda env: _compare(op, left(env), right(env))
    left, right = compile_node(node[1]), compile_node(node[2])
    if kind == "and":
        return lambda env: _truth(left(env), "&&") and _truth(right(env), "&&")
    return lambda env: _truth(left(env), "||") or _truth(right(env), "||")
