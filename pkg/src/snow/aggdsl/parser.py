"""Lexer and recursive-descent parser for aggregation programs.

Grammar (LL(1)); see docs/aggdsl.md for the reference::

    program    := or_expr EOF
    or_expr    := and_expr ("or" and_expr)*
    and_expr   := not_expr ("and" not_expr)*
    not_expr   := "not" not_expr | comparison
    comparison := additive (CMP additive)?
    additive   := term (("+" | "-") term)*
    term       := unary (("*" | "/") unary)*
    unary      := "-" unary | primary
    primary    := NUMBER | "true" | "false" | "(" or_expr ")"
                | NAME ("(" [or_expr ("," or_expr)*] ")")?
                | REF
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import Binary, Boolean, Call, Number, Ref, Unary

MAX_SOURCE_BYTES = 2048
KEYWORDS = {"and", "or", "not", "true", "false"}
CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ref>[a-z_][a-z0-9_]*\.(?:[a-z0-9_]+\*?|\*))
  | (?P<name>[a-z_][a-z0-9_]*)
  | (?P<op><=|>=|==|!=|[-+*/<>(),])
    """,
    re.VERBOSE,
)


class DslSyntaxError(ValueError):
    def __init__(self, message: str, position: int, source: str):
        self.position = position
        self.line = source.count("\n", 0, position) + 1
        self.column = position - (source.rfind("\n", 0, position) + 1) + 1
        self.message = message
        super().__init__(f"{message} at line {self.line}, column {self.column} (offset {position})")


@dataclass(frozen=True)
class Token:
    kind: str  # number | ref | name | op | kw | eof
    text: str
    pos: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise DslSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if kind == "name" and text in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, text, pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, msg: str):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise DslSyntaxError(f"{msg}, found {found}", t.pos, self.source)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        t = self.tok
        if t.kind == kind and (text is None or t.text == text):
            self.i += 1
            return t
        return None

    def expect(self, kind: str, text: str | None = None, what: str = "") -> Token:
        t = self.accept(kind, text)
        if t is None:
            self.error(f"expected {what or text or kind}")
        return t

    def program(self):
        node = self.or_expr()
        if self.tok.kind != "eof":
            self.error("expected end of program")
        return node

    def or_expr(self):
        node = self.and_expr()
        while self.accept("kw", "or"):
            node = Binary("or", node, self.and_expr())
        return node

    def and_expr(self):
        node = self.not_expr()
        while self.accept("kw", "and"):
            node = Binary("and", node, self.not_expr())
        return node

    def not_expr(self):
        if self.accept("kw", "not"):
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self):
        node = self.additive()
        t = self.tok
        if t.kind == "op" and t.text in CMP_OPS:
            self.i += 1
            node = Binary(t.text, node, self.additive())
            if self.tok.kind == "op" and self.tok.text in CMP_OPS:
                self.error("comparisons do not chain")
        return node

    def additive(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("op", "-"):
            return Unary("-", self.unary())
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "number":
            self.i += 1
            return Number(float(t.text))
        if t.kind == "kw" and t.text in ("true", "false"):
            self.i += 1
            return Boolean(t.text == "true")
        if self.accept("op", "("):
            node = self.or_expr()
            self.expect("op", ")", "')'")
            return node
        if t.kind == "ref":
            self.i += 1
            feature, sub = t.text.split(".", 1)
            return Ref(feature, sub)
        if t.kind == "name":
            self.i += 1
            if self.accept("op", "("):
                args = []
                if not self.accept("op", ")"):
                    args.append(self.or_expr())
                    while self.accept("op", ","):
                        args.append(self.or_expr())
                    self.expect("op", ")", "')' or ','")
                return Call(t.text, tuple(args))
            return Ref(t.text)
        self.error("expected a number, reference, function call or '('")


def parse_expression(source: str):
    if len(source.encode("utf-8")) > MAX_SOURCE_BYTES:
        raise DslSyntaxError(f"program longer than {MAX_SOURCE_BYTES} bytes", MAX_SOURCE_BYTES, source)
    return _Parser(source).program()
