"""Lexer and recursive-descent parser for the btcalc DSL.

The parser never raises on bad input: lexical, syntax and resolution
problems come back as :class:`Diagnostic` values carrying source spans.
Parsing stops at the first syntax error; resolution reports every problem
it finds.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field

from ..expr import BinOp, Expr, Num, Pow, Sym, neg
from ..state import (
    FALSE,
    TRUE,
    MAX_ENUM_VALUES,
    ActionSpec,
    And,
    Assign,
    Eq,
    Not,
    Or,
    Predicate,
    Value,
    Var,
    Variable,
)
from ..tree import Condition, Fallback, Leaf, Node, Sequence
from .document import CbfDecl, CheckDecl, Document, GoalsDecl, ModelDecl, TreeDecl

MAX_NESTING = 200
RESERVED = frozenset(("true", "false", "if", "then", "else"))


@dataclass(frozen=True, slots=True)
class Span:
    offset: int
    length: int
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True, slots=True)
class Diagnostic:
    span: Span
    message: str
    severity: str = "error"

    def render(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.span.line}:{self.span.column}: {self.severity}: {self.message}"


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # "id", "int", "float", "string", "op", "eof"
    text: str
    span: Span


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\["\\n])*")
  | (?P<op>:=|==|!=|&&|\|\||[{}()\[\],;:=!+\-*^])
    """,
    re.VERBOSE,
)


class _Lines:
    def __init__(self, text: str) -> None:
        self.starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def span(self, offset: int, length: int) -> Span:
        lo, hi = 0, len(self.starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return Span(offset, length, lo + 1, offset - self.starts[lo] + 1)


class ParseError(Exception):
    def __init__(self, span: Span, message: str) -> None:
        super().__init__(message)
        self.diagnostic = Diagnostic(span, message)


def tokenize(text: str) -> list[Token]:
    """All tokens plus a final ``eof``; raises :class:`ParseError` on bad input."""
    lines = _Lines(text)
    out: list[Token] = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            ch = text[pos]
            what = "unterminated string" if ch == '"' else f"unexpected character {ch!r}"
            raise ParseError(lines.span(pos, 1), what)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), lines.span(pos, m.end() - pos)))
        pos = m.end()
    out.append(Token("eof", "", lines.span(n, 0)))
    return out


# ---------------------------------------------------------------------------
# parser


@dataclass
class _Use:
    """A name reference to resolve once the whole document is read."""

    kind: str  # "prop", "eq", "assign", "action", "tree", "node"
    name: str
    span: Span
    value: Value | int | None = None
    owner: str | None = None  # tree name for node ids


@dataclass
class ParseResult:
    document: Document | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.document is not None and not any(d.severity == "error" for d in self.diagnostics)


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.toks = tokens
        self.i = 0
        self.depth = 0
        self.uses: list[_Use] = []
        self.model: ModelDecl | None = None
        self.model_span: Span | None = None
        self.actions: list[tuple[ActionSpec, Span]] = []
        self.trees: list[tuple[TreeDecl, Span]] = []
        self.goals: list[tuple[GoalsDecl, Span]] = []
        self.checks: list[tuple[CheckDecl, Span]] = []
        self.cbfs: list[tuple[CbfDecl, Span]] = []

    # -- token helpers --------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("op", "id")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected '{text}'")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "id":
            self.fail(f"expected {what}")
        return self.advance()

    def fail(self, message: str, span: Span | None = None) -> None:
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(span or t.span, f"{message}, found {found}" if span is None else message)

    def nest(self) -> None:
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise ParseError(self.tok.span, f"nesting deeper than {MAX_NESTING} levels")

    # -- items ----------------------------------------------------------

    def document(self) -> None:
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind != "id":
                self.fail("expected an item (model, action, tree, goals, check, cbf)")
            handler = {
                "model": self.model_item,
                "action": self.action_item,
                "tree": self.tree_item,
                "goals": self.goals_item,
                "check": self.check_item,
                "cbf": self.cbf_item,
            }.get(t.text)
            if handler is None:
                self.fail("expected an item (model, action, tree, goals, check, cbf)")
            self.advance()
            handler(t.span)

    def model_item(self, start: Span) -> None:
        name = self.ident("model name")
        if self.model is not None:
            raise ParseError(name.span, "only one model may be declared per document")
        self.expect("{")
        variables = []
        while not self.accept("}"):
            var = self.ident("variable name")
            if var.text in RESERVED:
                raise ParseError(var.span, f"{var.text!r} is reserved and cannot name a variable")
            self.expect(":")
            kind = self.ident("'bool' or 'enum'")
            if kind.text == "bool":
                variables.append(Variable.boolean(var.text))
            elif kind.text == "enum":
                self.expect("{")
                values = [self.enum_value()]
                while self.accept(","):
                    values.append(self.enum_value())
                self.expect("}")
                if len(set(values)) != len(values):
                    raise ParseError(var.span, f"enum {var.text!r} lists a value twice")
                if len(values) > MAX_ENUM_VALUES:
                    raise ParseError(var.span, f"enum {var.text!r} has more than {MAX_ENUM_VALUES} values")
                variables.append(Variable.enum(var.text, values))
            else:
                raise ParseError(kind.span, "expected 'bool' or 'enum'")
            self.expect(";")
        self.model = ModelDecl(name.text, tuple(variables))
        self.model_span = name.span

    def enum_value(self) -> str:
        t = self.ident("enum value")
        if t.text in RESERVED:
            raise ParseError(t.span, f"{t.text!r} is reserved and cannot be an enum value")
        return t.text

    def action_item(self, start: Span) -> None:
        name = self.ident("action name")
        self.expect("{")
        pre: list[Predicate] = []
        assigns: list[Assign] = []
        post: Predicate | None = None
        seen_effect = False
        while not self.accept("}"):
            key = self.ident("'pre', 'effect' or 'post'")
            self.expect(":")
            if key.text == "pre":
                pre.append(self.pred())
            elif key.text == "effect":
                if seen_effect:
                    raise ParseError(key.span, "duplicate 'effect' clause")
                seen_effect = True
                assigns.append(self.assign())
                while self.accept(","):
                    assigns.append(self.assign())
            elif key.text == "post":
                if post is not None:
                    raise ParseError(key.span, "duplicate 'post' clause")
                post = self.pred()
            else:
                raise ParseError(key.span, "expected 'pre', 'effect' or 'post'")
            self.expect(";")
        self.actions.append((ActionSpec(name.text, tuple(assigns), tuple(pre), post), name.span))

    def assign(self) -> Assign:
        var = self.ident("variable name")
        self.expect(":=")
        if self.accept("if"):
            cond = self.pred()
            self.expect("then")
            then, then_span = self.literal()
            self.expect("else")
            other, other_span = self.literal()
            self.uses.append(_Use("assign", var.text, then_span, then))
            self.uses.append(_Use("assign", var.text, other_span, other))
            return Assign(var.text, then, cond, other)
        value, span = self.literal()
        self.uses.append(_Use("assign", var.text, span, value))
        return Assign(var.text, value)

    def literal(self) -> tuple[Value, Span]:
        t = self.ident("a value")
        if t.text == "true":
            return True, t.span
        if t.text == "false":
            return False, t.span
        return t.text, t.span

    def tree_item(self, start: Span) -> None:
        name = self.ident("tree name")
        self.expect("=")
        self.current_tree = name.text
        root = self.node()
        self.accept(";")
        self.trees.append((TreeDecl(name.text, root), name.span))

    def node(self) -> Node:
        self.nest()
        label = None
        if self.at("name"):
            self.advance()
            if self.tok.kind != "string":
                self.fail("expected a quoted name")
            label = _unquote(self.advance().text)
        expanded = self.accept("expanded")
        head = self.ident("'seq', 'fall', 'cond' or 'act'")
        self.expect("(")
        if head.text in ("seq", "fall"):
            kids = [self.node()]
            while self.accept(","):
                kids.append(self.node())
            close = self.expect(")")
            if len(kids) < 2:
                raise ParseError(close.span, f"{head.text} needs at least 2 children, got 1")
            cls = Sequence if head.text == "seq" else Fallback
            out: Node = cls(tuple(kids), label, expanded)
        elif head.text == "cond":
            out = Condition(self.pred(), None, label, expanded)
            self.expect(")")
        elif head.text == "act":
            action = self.ident("action name")
            self.uses.append(_Use("action", action.text, action.span))
            success: Predicate | None = None
            failure: Predicate = FALSE
            given: set[str] = set()
            while self.accept(","):
                key = self.ident("'S' or 'F'")
                if key.text not in ("S", "F") or key.text in given:
                    raise ParseError(key.span, "expected 'S=' or 'F=' (each at most once)")
                given.add(key.text)
                self.expect("=")
                if key.text == "S":
                    success = self.pred()
                else:
                    failure = self.pred()
            self.expect(")")
            out = Leaf(action.text, success, failure, label, expanded)
        else:
            raise ParseError(head.span, f"unknown node kind {head.text!r}")
        self.depth -= 1
        return out

    def goals_item(self, start: Span) -> None:
        name = self.ident("goal list name")
        self.expect("=")
        self.expect("[")
        goals = [self.pred()]
        while self.accept(","):
            goals.append(self.pred())
        self.expect("]")
        self.accept(";")
        self.goals.append((GoalsDecl(name.text, tuple(goals)), name.span))

    def check_item(self, start: Span) -> None:
        name = self.ident("check name")
        self.expect("{")
        fields: dict[str, object] = {}
        while not self.accept("}"):
            key = self.ident("'tree', 'level', 'labeling' or 'cbar'")
            if key.text in fields:
                raise ParseError(key.span, f"duplicate {key.text!r} field")
            self.expect(":")
            if key.text == "tree":
                ref = self.ident("tree name")
                self.uses.append(_Use("tree", ref.text, ref.span))
                fields["tree"] = ref.text
            elif key.text in ("level", "labeling"):
                fields[key.text] = self.id_list(name.text)
            elif key.text == "cbar":
                fields["cbar"] = self.pred()
            else:
                raise ParseError(key.span, "expected 'tree', 'level', 'labeling' or 'cbar'")
            self.expect(";")
        if "tree" not in fields:
            raise ParseError(name.span, f"check {name.text!r} needs a 'tree' field")
        decl = CheckDecl(
            name.text, fields["tree"], fields.get("level"), fields.get("labeling"), fields.get("cbar")
        )
        self.checks.append((decl, name.span))

    def id_list(self, owner: str) -> tuple[int, ...]:
        out = [self.node_id(owner)]
        while self.accept(","):
            out.append(self.node_id(owner))
        return tuple(out)

    def node_id(self, owner: str) -> int:
        t = self.tok
        if t.kind != "int":
            self.fail("expected a node id")
        self.advance()
        if len(t.text) > 9:
            raise ParseError(t.span, "node id out of range")
        value = int(t.text)
        self.uses.append(_Use("node", t.text, t.span, value, owner))
        return value

    # -- cbf ------------------------------------------------------------

    def cbf_item(self, start: Span) -> None:
        name = self.ident("scenario name")
        self.expect("{")
        f: dict[str, object] = {}
        barriers: list[Expr] = []
        while not self.accept("}"):
            key = self.ident("a cbf field")
            if key.text in f:
                raise ParseError(key.span, f"duplicate {key.text!r} field")
            self.expect(":")
            if key.text == "dim":
                n = self.small_int("state dimension")
                self.expect(",")
                f["dim"] = (n, self.small_int("control dimension"))
            elif key.text in ("box", "x0"):
                f[key.text] = (key.span, self.number_list())
            elif key.text in ("drift", "input", "nominal"):
                f[key.text] = (key.span, self.expr_list())
            elif key.text == "barrier":
                barriers.append(self.expr())
            elif key.text == "alpha":
                f["alpha"] = (key.span, self.number())
            else:
                raise ParseError(key.span, f"unknown cbf field {key.text!r}")
            self.expect(";")
        for need in ("dim", "box", "alpha", "nominal"):
            if need not in f:
                raise ParseError(name.span, f"cbf {name.text!r} needs a {need!r} field")
        if not barriers:
            raise ParseError(name.span, f"cbf {name.text!r} needs at least one barrier")
        n, m = f["dim"]
        box_span, box = f["box"]
        if len(box) == 2:
            lo, hi = (box[0],) * m, (box[1],) * m
        elif len(box) == 2 * m:
            lo, hi = tuple(box[0::2]), tuple(box[1::2])
        else:
            raise ParseError(box_span, f"box needs 2 or {2 * m} numbers")
        if any(a > b for a, b in zip(lo, hi)):
            raise ParseError(box_span, "box lower bound exceeds upper bound")
        alpha_span, alpha = f["alpha"]
        if not alpha > 0:
            raise ParseError(alpha_span, "alpha must be positive")
        x0 = None
        if "x0" in f:
            x0_span, x0 = f["x0"]
            if len(x0) != n:
                raise ParseError(x0_span, f"x0 needs {n} numbers")
        sized = {"nominal": m, "drift": n, "input": n * m}
        for key, size in sized.items():
            if key in f and len(f[key][1]) != size:
                raise ParseError(f[key][0], f"{key} needs {size} expressions")
        if "input" not in f and n != m:
            raise ParseError(name.span, "input matrix is required when the dimensions differ")
        exprs = [*barriers, *f["nominal"][1]]
        for key in ("drift", "input"):
            if key in f:
                exprs.extend(f[key][1])
        for e in exprs:
            if any(k > n for k in e.symbols()):
                raise ParseError(name.span, f"expression {e} uses a symbol beyond x{n}")
        decl = CbfDecl(
            name.text, n, m, lo, hi, tuple(barriers), alpha, tuple(f["nominal"][1]),
            None if x0 is None else tuple(x0),
            f["drift"][1] if "drift" in f else None,
            f["input"][1] if "input" in f else None,
        )
        self.cbfs.append((decl, name.span))

    def small_int(self, what: str) -> int:
        t = self.tok
        if t.kind != "int" or len(t.text) > 3 or not 1 <= int(t.text) <= 4:
            self.fail(f"expected {what} (1..4)")
        self.advance()
        return int(t.text)

    def number(self) -> float:
        sign = -1.0 if self.accept("-") else 1.0
        t = self.tok
        if t.kind not in ("int", "float"):
            self.fail("expected a number")
        self.advance()
        value = sign * float(t.text)
        if not math.isfinite(value):
            raise ParseError(t.span, "number out of range")
        return value

    def number_list(self) -> tuple[float, ...]:
        out = [self.number()]
        while self.accept(","):
            out.append(self.number())
        return tuple(out)

    def expr_list(self) -> tuple[Expr, ...]:
        out = [self.expr()]
        while self.accept(","):
            out.append(self.expr())
        return tuple(out)

    def expr(self) -> Expr:
        self.nest()
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            rhs = self.term()
            e = _binop(op, e, rhs)
        self.depth -= 1
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.accept("*"):
            e = _binop("*", e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.accept("-"):
            self.nest()
            e = neg(self.unary())
            self.depth -= 1
            return e
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            t = self.tok
            if t.kind != "int" or len(t.text) > 2:
                self.fail("expected a small integer exponent")
            self.advance()
            return Pow(base, int(t.text))
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind in ("int", "float"):
            self.advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise ParseError(t.span, "number out of range")
            return Num(value)
        if t.kind == "id":
            m = re.fullmatch(r"x([1-9][0-9]?)", t.text)
            if m is None:
                raise ParseError(t.span, f"unknown symbol {t.text!r} (state symbols are x1..xn)")
            self.advance()
            return Sym(int(m.group(1)))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.fail("expected an expression")
        raise AssertionError

    # -- predicates -----------------------------------------------------

    def pred(self) -> Predicate:
        self.nest()
        args = [self.conj()]
        while self.accept("||"):
            args.append(self.conj())
        self.depth -= 1
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self) -> Predicate:
        args = [self.unary_pred()]
        while self.accept("&&"):
            args.append(self.unary_pred())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary_pred(self) -> Predicate:
        if self.accept("!"):
            self.nest()
            p = Not(self.unary_pred())
            self.depth -= 1
            return p
        if self.accept("("):
            p = self.pred()
            self.expect(")")
            return p
        t = self.ident("a condition")
        if t.text == "true":
            return TRUE
        if t.text == "false":
            return FALSE
        if self.at("==") or self.at("!="):
            negate = self.advance().text == "!="
            value, span = self.literal()
            self.uses.append(_Use("eq", t.text, span, value))
            p: Predicate = Eq(t.text, value)
            return Not(p) if negate else p
        self.uses.append(_Use("prop", t.text, t.span))
        return Var(t.text)


def _binop(op: str, a: Expr, b: Expr) -> Expr:
    return BinOp(op, a, b)


def _unquote(text: str) -> str:
    body = text[1:-1]
    return re.sub(r"\\(.)", lambda m: "\n" if m.group(1) == "n" else m.group(1), body)


# ---------------------------------------------------------------------------
# resolution


def _resolve(p: _Parser) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def dup(items, what):
        seen: set[str] = set()
        for decl, span in items:
            key = decl.id if isinstance(decl, ActionSpec) else decl.name
            if key in seen:
                diags.append(Diagnostic(span, f"duplicate {what} {key!r}"))
            seen.add(key)

    dup(p.actions, "action")
    dup(p.trees, "tree")
    dup(p.goals, "goal list")
    dup(p.checks, "check")
    dup(p.cbfs, "cbf scenario")

    variables = {v.name: v for v in p.model.variables} if p.model else {}
    needs_model = any(u.kind in ("prop", "eq", "assign") for u in p.uses) or p.trees
    if p.model is None and needs_model:
        first = next((u.span for u in p.uses), None) or p.trees[0][1]
        diags.append(Diagnostic(first, "conditions and trees need a model declaration"))
        return diags
    if p.model is not None and len(set(variables)) != len(p.model.variables):
        diags.append(Diagnostic(p.model_span, "model declares a variable twice"))

    actions = {a.id for a, _ in p.actions}
    trees = {t.name: t for t, _ in p.trees}
    for u in p.uses:
        if u.kind in ("prop", "eq", "assign"):
            var = variables.get(u.name)
            if var is None:
                diags.append(Diagnostic(u.span, f"unknown variable {u.name!r}"))
            elif u.kind == "prop" and not var.is_bool:
                diags.append(Diagnostic(u.span, f"enum variable {u.name!r} needs a comparison"))
            elif u.kind != "prop" and not any(v == u.value and type(v) is type(u.value) for v in var.values):
                diags.append(Diagnostic(u.span, f"{_show(u.value)} is not a value of {u.name!r}"))
        elif u.kind == "action" and u.name not in actions:
            diags.append(Diagnostic(u.span, f"unknown action {u.name!r}"))
        elif u.kind == "tree" and u.name not in trees:
            diags.append(Diagnostic(u.span, f"unknown tree {u.name!r}"))
    for decl, span in p.actions:
        seen: set[str] = set()
        for a in decl.assignments:
            if a.var in seen:
                diags.append(Diagnostic(span, f"action {decl.id!r} assigns {a.var!r} twice"))
            seen.add(a.var)
    return diags


def _show(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value)


def parse(source: str | bytes, filename: str = "<input>") -> ParseResult:
    """Parse a document; never raises on malformed input."""
    if isinstance(source, bytes):
        try:
            text = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            line = source.count(b"\n", 0, exc.start) + 1
            col = exc.start - (source.rfind(b"\n", 0, exc.start) + 1) + 1
            return ParseResult(None, [Diagnostic(Span(exc.start, 1, line, col), "input is not valid UTF-8")])
    else:
        text = source
    try:
        parser = _Parser(tokenize(text))
        parser.document()
    except ParseError as exc:
        return ParseResult(None, [exc.diagnostic])
    diags = _resolve(parser)
    if diags:
        return ParseResult(None, diags)
    doc = Document(
        parser.model,
        tuple(a for a, _ in parser.actions),
        tuple(t for t, _ in parser.trees),
        tuple(g for g, _ in parser.goals),
        tuple(c for c, _ in parser.checks),
        tuple(c for c, _ in parser.cbfs),
        hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )
    diags = _instantiate(doc, parser)
    return ParseResult(None if diags else doc, diags)


def _instantiate(doc: Document, parser: _Parser) -> list[Diagnostic]:
    """Build trees and scenarios so structural errors surface at parse time."""
    diags = []
    if doc.model is not None:
        try:
            doc.world_model
        except ValueError as exc:
            return [Diagnostic(parser.model_span, str(exc))]
    for decl, span in parser.trees:
        try:
            doc.tree(decl.name)
        except ValueError as exc:
            diags.append(Diagnostic(span, f"tree {decl.name!r}: {exc}"))
    sizes = {decl.name: len(doc.tree(decl.name)) for decl, _ in parser.trees if not diags}
    for u in parser.uses:
        if u.kind != "node" or diags:
            continue
        check = next(c for c, _ in parser.checks if c.name == u.owner)
        size = sizes.get(check.tree)
        if size is not None and not 0 <= int(u.value) < size:
            diags.append(Diagnostic(u.span, f"node {u.value} is not in tree {check.tree!r} ({size} nodes)"))
    for decl, span in parser.checks:
        if len(set(decl.level or ())) != len(decl.level or ()):
            diags.append(Diagnostic(span, f"check {decl.name!r}: level lists a node twice"))
        if decl.level and decl.labeling and sorted(decl.level) != sorted(decl.labeling):
            diags.append(Diagnostic(span, f"check {decl.name!r}: labeling must order exactly the level's nodes"))
    for decl, span in parser.cbfs:
        try:
            decl.problem()
        except ValueError as exc:
            diags.append(Diagnostic(span, f"cbf {decl.name!r}: {exc}"))
    return diags
