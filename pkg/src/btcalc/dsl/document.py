"""Parsed DSL documents and their conversion to analysis objects."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from ..cbf import CbfProblem
from ..convergence import ConvergenceProblem
from ..expr import ONE, ZERO, Expr
from ..state import ActionSpec, Predicate, Variable, WorldModel
from ..tree import Node, Tree


class DocumentError(ValueError):
    """A lookup by name failed or a declaration cannot be instantiated."""


@dataclass(frozen=True)
class ModelDecl:
    name: str
    variables: tuple[Variable, ...]


@dataclass(frozen=True)
class TreeDecl:
    name: str
    root: Node


@dataclass(frozen=True)
class GoalsDecl:
    name: str
    goals: tuple[Predicate, ...]


@dataclass(frozen=True)
class CheckDecl:
    """Convergence problem; ``level``/``labeling`` are preorder node ids."""

    name: str
    tree: str
    level: tuple[int, ...] | None = None
    labeling: tuple[int, ...] | None = None
    cbar: Predicate | None = None


@dataclass(frozen=True)
class CbfDecl:
    """CBF scenario.  ``input`` is row-major ``n x m``; ``None`` fields take defaults."""

    name: str
    n: int
    m: int
    u_lo: tuple[float, ...]
    u_hi: tuple[float, ...]
    barriers: tuple[Expr, ...]
    alpha: float
    nominal: tuple[Expr, ...]
    x0: tuple[float, ...] | None = None
    drift: tuple[Expr, ...] | None = None
    input: tuple[Expr, ...] | None = None

    def problem(self) -> CbfProblem:
        drift = self.drift if self.drift is not None else (ZERO,) * self.n
        if self.input is not None:
            flat = self.input
        elif self.n == self.m:
            flat = tuple(ONE if r == c else ZERO for r in range(self.n) for c in range(self.m))
        else:
            raise DocumentError(f"cbf {self.name!r}: input matrix is required when n != m")
        if len(flat) != self.n * self.m:
            raise DocumentError(f"cbf {self.name!r}: input needs {self.n * self.m} entries")
        rows = tuple(tuple(flat[r * self.m : (r + 1) * self.m]) for r in range(self.n))
        return CbfProblem(
            self.n, self.m, tuple(drift), rows, self.u_lo, self.u_hi,
            self.barriers, self.alpha, self.nominal, self.name,
        )


@dataclass(frozen=True)
class Document:
    """Everything declared in one source file, grouped by kind."""

    model: ModelDecl | None = None
    actions: tuple[ActionSpec, ...] = ()
    trees: tuple[TreeDecl, ...] = ()
    goals: tuple[GoalsDecl, ...] = ()
    checks: tuple[CheckDecl, ...] = ()
    cbfs: tuple[CbfDecl, ...] = ()
    source_hash: str | None = field(default=None, compare=False)

    @cached_property
    def world_model(self) -> WorldModel:
        if self.model is None:
            raise DocumentError("the document declares no model")
        return WorldModel(self.model.variables, self.actions, self.model.name)

    @cached_property
    def _trees(self) -> dict[str, Tree]:
        return {}

    def tree(self, name: str) -> Tree:
        if name not in self._trees:
            decl = _lookup(self.trees, name, "tree")
            self._trees[name] = Tree(decl.root, self.world_model, name)
        return self._trees[name]

    def goal_list(self, name: str) -> tuple[Predicate, ...]:
        return _lookup(self.goals, name, "goal list").goals

    def check(self, name: str) -> CheckDecl:
        return _lookup(self.checks, name, "check")

    def problem(self, name: str) -> ConvergenceProblem:
        decl = self.check(name)
        tree = self.tree(decl.tree)
        labeling = decl.labeling if decl.labeling is not None else decl.level
        if labeling is None:
            labeling = tuple(tree.leaves)
        level = decl.level if decl.level is not None else labeling
        cbar = None if decl.cbar is None else decl.cbar.region(tree.model)
        return ConvergenceProblem.make(tree, labeling, cbar, level)

    def cbf(self, name: str) -> CbfDecl:
        return _lookup(self.cbfs, name, "cbf scenario")

    def names(self, kind: str) -> list[str]:
        return [d.name for d in getattr(self, kind)] if kind != "actions" else [a.id for a in self.actions]


def _lookup(decls, name, what):
    for d in decls:
        if d.name == name:
            return d
    known = ", ".join(d.name for d in decls) or "none"
    raise DocumentError(f"no {what} named {name!r} (declared: {known})")
