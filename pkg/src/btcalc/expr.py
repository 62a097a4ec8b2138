"""Small arithmetic expressions over state symbols ``x1..xn``.

Used for barrier functions, drift, input matrices and nominal controllers.
Expressions are immutable trees with symbolic differentiation; evaluation
compiles them to Python closures once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence


class Expr:
    __slots__ = ()

    def to_text(self, prec: int = 0) -> str:
        raise NotImplementedError

    def _py(self) -> str:
        raise NotImplementedError

    def symbols(self) -> frozenset[int]:
        raise NotImplementedError

    def diff(self, k: int) -> "Expr":
        """Partial derivative with respect to ``x{k}`` (1-based)."""
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()

    def __add__(self, other: "Expr") -> "Expr":
        return add(self, other)

    def __sub__(self, other: "Expr") -> "Expr":
        return sub(self, other)

    def __mul__(self, other: "Expr") -> "Expr":
        return mul(self, other)

    def __neg__(self) -> "Expr":
        return neg(self)

    def compile(self) -> Callable[[Sequence[float]], float]:
        code = compile(f"lambda x: {self._py()}", "<expr>", "eval")
        return eval(code, {"__builtins__": {}})  # noqa: S307 - source is generated from the AST

    def evaluate(self, x: Sequence[float]) -> float:
        return float(self.compile()(x))


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float

    def to_text(self, prec: int = 0) -> str:
        text = repr(float(self.value))
        # sign test on the text so that -0.0 is bracketed too
        return f"({text})" if text.startswith("-") and prec > 3 else text

    def _py(self) -> str:
        return f"({float(self.value)!r})"

    def symbols(self) -> frozenset[int]:
        return frozenset()

    def diff(self, k: int) -> Expr:
        return ZERO


ZERO = Num(0.0)
ONE = Num(1.0)


@dataclass(frozen=True, slots=True)
class Sym(Expr):
    """State coordinate ``x{index}`` (1-based)."""

    index: int

    def to_text(self, prec: int = 0) -> str:
        return f"x{self.index}"

    def _py(self) -> str:
        return f"x[{self.index - 1}]"

    def symbols(self) -> frozenset[int]:
        return frozenset((self.index,))

    def diff(self, k: int) -> Expr:
        return ONE if k == self.index else ZERO


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr

    def to_text(self, prec: int = 0) -> str:
        text = "-" + self.arg.to_text(3)
        return f"({text})" if prec > 3 else text

    def _py(self) -> str:
        return f"(-{self.arg._py()})"

    def symbols(self) -> frozenset[int]:
        return self.arg.symbols()

    def diff(self, k: int) -> Expr:
        return neg(self.arg.diff(k))


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str  # "+", "-", "*"
    left: Expr
    right: Expr

    def to_text(self, prec: int = 0) -> str:
        mine = 2 if self.op == "*" else 1
        text = f"{self.left.to_text(mine)} {self.op} {self.right.to_text(mine + 1)}"
        return f"({text})" if prec > mine else text

    def _py(self) -> str:
        return f"({self.left._py()} {self.op} {self.right._py()})"

    def symbols(self) -> frozenset[int]:
        return self.left.symbols() | self.right.symbols()

    def diff(self, k: int) -> Expr:
        da, db = self.left.diff(k), self.right.diff(k)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        return add(mul(da, self.right), mul(self.left, db))


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError("only non-negative integer powers are supported")

    def to_text(self, prec: int = 0) -> str:
        text = f"{self.base.to_text(5)}^{self.exponent}"
        return f"({text})" if prec > 4 else text

    def _py(self) -> str:
        return f"({self.base._py()} ** {self.exponent})"

    def symbols(self) -> frozenset[int]:
        return self.base.symbols()

    def diff(self, k: int) -> Expr:
        if self.exponent == 0:
            return ZERO
        inner = self.base.diff(k)
        outer = self.base if self.exponent == 2 else power(self.base, self.exponent - 1)
        return mul(mul(Num(float(self.exponent)), outer), inner)


# light simplification keeps derivatives readable; structure is otherwise kept


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def gradient(e: Expr, n: int) -> tuple[Expr, ...]:
    return tuple(e.diff(k) for k in range(1, n + 1))


def compile_vector(exprs: Sequence[Expr]) -> Callable[[Sequence[float]], list[float]]:
    """One closure evaluating several expressions at once."""
    body = ", ".join(e._py() for e in exprs)
    code = compile(f"lambda x: [{body}]", "<exprs>", "eval")
    return eval(code, {"__builtins__": {}})  # noqa: S307 - source is generated from the AST


def is_finite(e: Expr) -> bool:
    if isinstance(e, Num):
        return math.isfinite(e.value)
    if isinstance(e, Sym):
        return True
    if isinstance(e, Neg):
        return is_finite(e.arg)
    if isinstance(e, Pow):
        return is_finite(e.base)
    assert isinstance(e, BinOp)
    return is_finite(e.left) and is_finite(e.right)
