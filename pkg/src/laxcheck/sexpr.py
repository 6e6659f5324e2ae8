"""S-expression reader and printer with source spans.

Atoms are symbols, integers or fractions (``-3``, ``1/2``) and double-quoted
strings.  ``;`` starts a comment running to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOSPAN = Span(0, 0, 0, 0)


class SexpError(Exception):
    """Malformed s-expression text."""

    def __init__(self, message: str, span: Span = NOSPAN):
        super().__init__(f"{span}: {message}" if span != NOSPAN else message)
        self.message = message
        self.span = span


@dataclass(frozen=True)
class Sym:
    name: str
    span: Span = field(default=NOSPAN, compare=False)


@dataclass(frozen=True)
class Num:
    value: Fraction
    span: Span = field(default=NOSPAN, compare=False)


@dataclass(frozen=True)
class Str:
    value: str
    span: Span = field(default=NOSPAN, compare=False)


@dataclass(frozen=True)
class SList:
    items: tuple["Node", ...]
    span: Span = field(default=NOSPAN, compare=False)

    def head(self) -> str | None:
        if self.items and isinstance(self.items[0], Sym):
            return self.items[0].name
        return None


Node = Union[Sym, Num, Str, SList]

_NUM = re.compile(r"[+-]?\d+(/\d+)?\Z")
_CLOSED_STR = re.compile(r'"(?:[^"\\]|\\.)*"\Z')
_TOKEN = re.compile(r'\s+|;[^\n]*|\(|\)|"(?:[^"\\]|\\.)*"?|[^\s();"]+')


def _tokens(text: str) -> Iterator[tuple[str, Span]]:
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SexpError(f"unexpected character {text[pos]!r}", Span(line, col, line, col + 1))
        tok = m.group(0)
        start = (line, col)
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
        if tok[0].isspace() or tok[0] == ";":
            continue
        yield tok, Span(start[0], start[1], line, col)


def _atom(tok: str, span: Span) -> Node:
    if tok[0] == '"':
        if len(tok) < 2 or not _CLOSED_STR.match(tok):
            raise SexpError("unterminated string", span)
        return Str(re.sub(r"\\(.)", r"\1", tok[1:-1]), span)
    if _NUM.match(tok):
        try:
            return Num(Fraction(tok), span)
        except ZeroDivisionError:
            raise SexpError(f"zero denominator in {tok}", span) from None
    return Sym(tok, span)


def read_all(text: str) -> list[Node]:
    """Parse every top-level form of ``text``."""
    stack: list[tuple[list[Node], Span]] = []
    top: list[Node] = []
    for tok, span in _tokens(text):
        if tok == "(":
            stack.append(([], span))
        elif tok == ")":
            if not stack:
                raise SexpError("unbalanced ')'", span)
            items, open_span = stack.pop()
            node = SList(tuple(items), Span(open_span.line, open_span.col, span.end_line, span.end_col))
            (stack[-1][0] if stack else top).append(node)
        else:
            node = _atom(tok, span)
            (stack[-1][0] if stack else top).append(node)
    if stack:
        raise SexpError("unclosed '('", stack[-1][1])
    return top


def read_one(text: str) -> Node:
    forms = read_all(text)
    if len(forms) != 1:
        raise SexpError(f"expected one form, found {len(forms)}")
    return forms[0]


def _num_str(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _str_lit(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump(node: Node, indent: int | None = None, _level: int = 0) -> str:
    """Canonical text.  With ``indent`` set, lists of lists break one child per line."""
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Num):
        return _num_str(node.value)
    if isinstance(node, Str):
        return _str_lit(node.value)
    parts = [dump(x, indent, _level + 1) for x in node.items]
    if indent is None or not any(isinstance(x, SList) for x in node.items[1:]) or _level >= 1:
        return "(" + " ".join(parts) + ")"
    pad = "\n" + " " * (indent * (_level + 1))
    head = []
    rest = []
    for x, p in zip(node.items, parts):
        (rest if rest or isinstance(x, SList) else head).append(p)
    return "(" + " ".join(head) + "".join(pad + p for p in rest) + ")"
