"""
SMT-LIB 2 printer and parser for the emitted QF_BV fragment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .compile import NamedAssertion, SmtDocument
from .terms import (
    ARITY,
    BOOL,
    FALSE,
    TRUE,
    App,
    BoolConst,
    BvConst,
    SmtArityError,
    SmtError,
    SmtSyntaxError,
    SmtUndeclaredError,
    SmtWidthError,
    Sort,
    Term,
    Var,
    check_arity,
)

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


def render_sort(sort: Sort) -> str:
    return "Bool" if sort.is_bool else f"(_ BitVec {sort.width})"


def render_term(t: Term) -> str:
    if isinstance(t, BvConst):
        return f"(_ bv{t.value} {t.width})"
    if isinstance(t, BoolConst):
        return "true" if t.value else "false"
    if isinstance(t, Var):
        return t.name
    assert isinstance(t, App)
    args = " ".join(render_term(a) for a in t.args)
    if t.op == "extract":
        hi, lo = t.params
        return f"((_ extract {hi} {lo}) {args})"
    return f"({t.op} {args})"


def render(doc: SmtDocument) -> str:
    """
    Render a document as SMT-LIB 2 text.

    Output is deterministic: declarations in sorted order, assertions in
    document order, one command per line.
    """
    lines = [f"(set-logic {doc.logic})"]
    for name, sort in doc.declarations:
        lines.append(f"(declare-fun {name} () {render_sort(sort)})")
    for a in doc.assertions:
        lines.append(f"(assert (! {render_term(a.term)} :named {a.name}))")
    if doc.check_sat:
        lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


SExpr = Union[Token, "SList"]


@dataclass(frozen=True)
class SList:
    items: tuple[SExpr, ...]
    line: int
    column: int


def _pos(node: SExpr) -> tuple[int, int]:
    return node.line, node.column


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        chunk = m.group()
        if not chunk.isspace() and not chunk.startswith(";"):
            tokens.append(Token(chunk, line, m.start() - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + chunk.rindex("\n") + 1
    return tokens


def read_sexprs(text: str) -> list[SExpr]:
    """Group tokens into nested lists."""
    stack: list[list[SExpr]] = [[]]
    opens: list[Token] = []
    for tok in tokenize(text):
        if tok.text == "(":
            stack.append([])
            opens.append(tok)
        elif tok.text == ")":
            if not opens:
                raise SmtSyntaxError("Unbalanced ')'", tok.line, tok.column)
            start = opens.pop()
            items = stack.pop()
            stack[-1].append(SList(tuple(items), start.line, start.column))
        else:
            stack[-1].append(tok)
    if opens:
        raise SmtSyntaxError("Unclosed '('", opens[-1].line, opens[-1].column)
    return stack[0]


def _symbol(node: SExpr, what: str) -> str:
    if not isinstance(node, Token):
        raise SmtSyntaxError(f"Expected {what}", *_pos(node))
    return node.text


def _numeral(node: SExpr) -> int:
    text = _symbol(node, "numeral")
    if not text.isdigit():
        raise SmtSyntaxError(f"Expected numeral, got {text!r}", *_pos(node))
    return int(text)


def _parse_sort(node: SExpr) -> Sort:
    if isinstance(node, Token):
        if node.text == "Bool":
            return BOOL
        raise SmtSyntaxError(f"Unsupported sort {node.text!r}", *_pos(node))
    items = node.items
    if len(items) == 3 and [_symbol(i, "sort") for i in items[:2]] == ["_", "BitVec"]:
        width = _numeral(items[2])
        if width < 1:
            raise SmtWidthError("BitVec width must be positive", *_pos(items[2]))
        return Sort(width)
    raise SmtSyntaxError("Unsupported sort", *_pos(node))


def _literal(tok: Token) -> BvConst | None:
    text = tok.text
    try:
        if text.startswith("#b") and len(text) > 2:
            return BvConst(int(text[2:], 2), len(text) - 2)
        if text.startswith("#x") and len(text) > 2:
            return BvConst(int(text[2:], 16), 4 * (len(text) - 2))
    except ValueError:
        raise SmtSyntaxError(f"Malformed literal {text!r}", tok.line, tok.column) from None
    return None


class _TermParser:
    def __init__(self, scope: dict[str, Sort]):
        self.scope = scope

    def parse(self, node: SExpr) -> Term:
        if isinstance(node, Token):
            return self._atom(node)
        if not node.items:
            raise SmtSyntaxError("Empty application", *_pos(node))
        head, args = node.items[0], node.items[1:]

        if isinstance(head, SList):
            return self._indexed(head, args, node)
        if head.text == "_":
            return self._bv_const(node)

        op = head.text
        try:
            check_arity(op, len(args))
        except SmtError as e:
            raise type(e)(e.message, head.line, head.column) from None
        terms = tuple(self.parse(a) for a in args)
        return self._build(op, terms, (), node)

    def _atom(self, tok: Token) -> Term:
        if tok.text == "true":
            return TRUE
        if tok.text == "false":
            return FALSE
        lit = _literal(tok)
        if lit is not None:
            return lit
        if tok.text in ARITY or tok.text in ("(", ")"):
            raise SmtSyntaxError(f"Unexpected {tok.text!r}", tok.line, tok.column)
        if tok.text not in self.scope:
            raise SmtUndeclaredError(f"Undeclared variable {tok.text!r}", tok.line, tok.column)
        return Var(tok.text, self.scope[tok.text].width)

    def _bv_const(self, node: SList) -> Term:
        items = node.items
        if len(items) != 3:
            raise SmtSyntaxError("Malformed indexed constant", *_pos(node))
        name = _symbol(items[1], "bvN")
        if not (name.startswith("bv") and name[2:].isdigit()):
            raise SmtSyntaxError(f"Unsupported indexed symbol {name!r}", *_pos(items[1]))
        width = _numeral(items[2])
        try:
            return BvConst(int(name[2:]), width)
        except SmtError as e:
            raise SmtWidthError(e.message, *_pos(node)) from None

    def _indexed(self, head: SList, args: tuple[SExpr, ...], node: SList) -> Term:
        items = head.items
        if (
            len(items) != 4
            or _symbol(items[0], "_") != "_"
            or _symbol(items[1], "extract") != "extract"
        ):
            raise SmtSyntaxError("Unsupported indexed operator", *_pos(head))
        params = (_numeral(items[2]), _numeral(items[3]))
        try:
            check_arity("extract", len(args))
        except SmtError as e:
            raise type(e)(e.message, head.line, head.column) from None
        terms = tuple(self.parse(a) for a in args)
        return self._build("extract", terms, params, node)

    def _build(self, op: str, args: tuple[Term, ...], params: tuple[int, ...], node: SList) -> App:
        try:
            return App(op, args, params)
        except (SmtWidthError, SmtArityError, SmtSyntaxError) as e:
            raise type(e)(e.message, *_pos(node)) from None


def parse(text: str) -> SmtDocument:
    """
    Parse the emitted fragment back into a document.

    Accepts set-logic QF_BV, declare-fun of nullary bitvector or Bool
    symbols, assert (optionally named with `!`), check-sat and exit.

    Raises:
        SmtSyntaxError: Out-of-fragment or malformed text, with line/column
        SmtWidthError: Sort errors in a term
        SmtUndeclaredError: Use of an undeclared variable
    """
    logic = None
    declarations: dict[str, Sort] = {}
    assertions: list[NamedAssertion] = []
    check_sat = False

    for cmd in read_sexprs(text):
        if not isinstance(cmd, SList) or not cmd.items:
            raise SmtSyntaxError("Expected a command", *_pos(cmd))
        name = _symbol(cmd.items[0], "command name")
        args = cmd.items[1:]

        if name == "set-logic":
            if len(args) != 1 or _symbol(args[0], "logic") != "QF_BV":
                raise SmtSyntaxError("Only (set-logic QF_BV) is supported", *_pos(cmd))
            logic = "QF_BV"
        elif name == "declare-fun":
            if len(args) != 3 or not isinstance(args[1], SList) or args[1].items:
                raise SmtSyntaxError("Only nullary declare-fun is supported", *_pos(cmd))
            var_name = _symbol(args[0], "symbol")
            if var_name in declarations:
                raise SmtSyntaxError(f"Duplicate declaration of {var_name}", *_pos(args[0]))
            declarations[var_name] = _parse_sort(args[2])
        elif name == "assert":
            if len(args) != 1:
                raise SmtArityError("assert takes one term", *_pos(cmd))
            taken = {a.name for a in assertions}
            assertions.append(_parse_assertion(args[0], declarations, taken))
        elif name == "check-sat":
            check_sat = True
        elif name == "exit":
            continue
        else:
            raise SmtSyntaxError(f"Unsupported command {name!r}", *_pos(cmd))

    if logic is None:
        raise SmtSyntaxError("Missing (set-logic QF_BV)", 1, 1)
    return SmtDocument(
        declarations=tuple(sorted(declarations.items())),
        assertions=tuple(assertions),
        check_sat=check_sat,
    )


def _parse_assertion(node: SExpr, scope: dict[str, Sort], taken: set[str]) -> NamedAssertion:
    label = f"assertion_{len(taken)}"
    label_pos = _pos(node)
    body = node
    if isinstance(node, SList) and node.items and isinstance(node.items[0], Token):
        if node.items[0].text == "!":
            items = node.items
            if len(items) != 4 or _symbol(items[2], ":named") != ":named":
                raise SmtSyntaxError("Only :named annotations are supported", *_pos(node))
            body = items[1]
            label = _symbol(items[3], "assertion name")
            label_pos = _pos(items[3])
    if label in taken:
        raise SmtSyntaxError(f"Duplicate assertion name {label}", *label_pos)
    term = _TermParser(scope).parse(body)
    if not term.sort.is_bool:
        raise SmtWidthError("Assertion must be Bool", *_pos(body))
    return NamedAssertion(label, term)
