"""Behavior tree structure and discrete-time execution.

Nodes are immutable values; a :class:`Tree` indexes them in depth-first
preorder, so node ``0`` is the root and every subtree occupies a contiguous
id range.  Ticking is evaluated pointwise from the predicates, independently
of :mod:`btcalc.regions`, which lets the two serve as oracles for each other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Union

from .state import FALSE, MAX_STATES, ActionSpec, Not, Predicate, State, Value, WorldModel, pred_values


class TreeError(ValueError):
    """Structurally invalid tree."""


class NotRunning(ValueError):
    """``explain`` was asked about a state where the root is not running."""


class Status(enum.Enum):
    RUNNING = "R"
    SUCCESS = "S"
    FAILURE = "F"

    def __str__(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class Sequence:
    children: tuple["Node", ...]
    name: str | None = None
    expanded: bool = False


@dataclass(frozen=True)
class Fallback:
    children: tuple["Node", ...]
    name: str | None = None
    expanded: bool = False


@dataclass(frozen=True)
class Leaf:
    """Action leaf.  ``success=None`` means "the action's post predicate"."""

    action: str
    success: Predicate | None = None
    failure: Predicate = FALSE
    name: str | None = None
    expanded: bool = False


@dataclass(frozen=True)
class Condition:
    """Leaf with an empty running region; its optional action never runs."""

    predicate: Predicate
    action: str | None = None
    name: str | None = None
    expanded: bool = False


Node = Union[Sequence, Fallback, Leaf, Condition]
Interior = (Sequence, Fallback)


def seq(*children: Node, name: str | None = None, expanded: bool = False) -> Sequence:
    return Sequence(tuple(children), name, expanded)


def fall(*children: Node, name: str | None = None, expanded: bool = False) -> Fallback:
    return Fallback(tuple(children), name, expanded)


class Tree:
    """A rooted BT over a world model, indexed in preorder."""

    def __init__(self, root: Node, model: WorldModel, name: str = "tree") -> None:
        self.root = root
        self.model = model
        self.name = name
        self.nodes: list[Node] = []
        self.parent: list[int | None] = []
        self.children: list[tuple[int, ...]] = []
        self.end: list[int] = []
        self._index(root, None)
        self._success: dict[int, Predicate] = {}
        self._failure: dict[int, Predicate] = {}
        self._validate()

    def _index(self, node: Node, parent: int | None) -> int:
        i = len(self.nodes)
        self.nodes.append(node)
        self.parent.append(parent)
        self.children.append(())
        self.end.append(i + 1)
        if isinstance(node, Interior):
            if len(node.children) < 2:
                kind = "seq" if isinstance(node, Sequence) else "fall"
                raise TreeError(f"{kind} node {i} needs at least 2 children, got {len(node.children)}")
            kids = tuple(self._index(child, i) for child in node.children)
            self.children[i] = kids
            self.end[i] = len(self.nodes)
        elif not isinstance(node, (Leaf, Condition)):
            raise TreeError(f"not a tree node: {node!r}")
        return i

    def _validate(self) -> None:
        for i, node in enumerate(self.nodes):
            if isinstance(node, Leaf):
                try:
                    action = self.model.actions[node.action]
                except KeyError:
                    raise TreeError(f"leaf {i} uses unknown action {node.action!r}") from None
                if node.success is None:
                    if action.post is None:
                        raise TreeError(
                            f"leaf {i} ({node.action}) has no S= and the action declares no post"
                        )
                    success = action.post
                else:
                    success = node.success
                self._success[i] = success
                self._failure[i] = node.failure
                self._check_names(success)
                self._check_names(node.failure)
                if self.model.size <= MAX_STATES:
                    s = success.region(self.model)
                    f = node.failure.region(self.model)
                    if not s.isdisjoint(f):
                        raise TreeError(f"leaf {i} ({node.action}) has overlapping S and F regions")
            elif isinstance(node, Condition):
                self._check_names(node.predicate)
                if node.action is not None and node.action not in self.model.actions:
                    raise TreeError(f"condition {i} uses unknown action {node.action!r}")

    def _check_names(self, pred: Predicate) -> None:
        for name in pred.variables():
            self.model.variable(name)
        pred_values(self.model, pred)

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Tree({self.name!r}, {len(self.nodes)} nodes)"

    # -- structure ------------------------------------------------------

    def is_leaf(self, i: int) -> bool:
        return not isinstance(self.nodes[i], Interior)

    @property
    def leaves(self) -> list[int]:
        return [i for i in range(len(self.nodes)) if self.is_leaf(i)]

    @property
    def action_leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if isinstance(n, Leaf)]

    def subtree(self, i: int) -> range:
        return range(i, self.end[i])

    def contains(self, i: int, j: int) -> bool:
        """Whether node ``j`` lies in the subtree rooted at ``i``."""
        return i <= j < self.end[i]

    def ancestors(self, i: int) -> Iterator[int]:
        j = self.parent[i]
        while j is not None:
            yield j
            j = self.parent[j]

    def big_brother(self, i: int) -> int | None:
        p = self.parent[i]
        if p is None:
            return None
        kids = self.children[p]
        k = kids.index(i)
        return kids[k - 1] if k > 0 else None

    def success_pred(self, i: int) -> Predicate:
        node = self.nodes[i]
        if isinstance(node, Condition):
            return node.predicate
        return self._success[i]

    def failure_pred(self, i: int) -> Predicate:
        node = self.nodes[i]
        if isinstance(node, Condition):
            return Not(node.predicate)
        return self._failure[i]

    def action_of(self, i: int) -> ActionSpec:
        node = self.nodes[i]
        if not isinstance(node, Leaf):
            raise TreeError(f"node {i} is not an action leaf")
        return self.model.actions[node.action]

    def display_name(self, i: int) -> str:
        node = self.nodes[i]
        if node.name is not None:
            return node.name
        if isinstance(node, Sequence):
            return f"seq {i}"
        if isinstance(node, Fallback):
            return f"fall {i}"
        if isinstance(node, Leaf):
            return node.action
        return node.predicate.to_text()

    def find(self, name: str) -> int:
        for i, node in enumerate(self.nodes):
            if node.name == name:
                return i
        raise KeyError(name)


# ---------------------------------------------------------------------------
# execution


def _tick(tree: Tree, i: int, asg: dict[str, Value]) -> tuple[Status, int | None]:
    node = tree.nodes[i]
    if isinstance(node, Condition):
        return (Status.SUCCESS if node.predicate.evaluate(asg) else Status.FAILURE), None
    if isinstance(node, Leaf):
        if tree._success[i].evaluate(asg):
            return Status.SUCCESS, None
        if node.failure.evaluate(asg):
            return Status.FAILURE, None
        return Status.RUNNING, i
    # Sequence advances on Success, Fallback on Failure
    advance = Status.SUCCESS if isinstance(node, Sequence) else Status.FAILURE
    for child in tree.children[i]:
        status, leaf = _tick(tree, child, asg)
        if status is not advance:
            return status, leaf
    return advance, None


def tick(tree: Tree, state: State, node: int = 0) -> tuple[Status, int | None]:
    """Status of ``node`` at ``state`` and, when running, the leaf in control."""
    return _tick(tree, node, tree.model.unpack(state))


@dataclass(frozen=True, slots=True)
class Terminal:
    status: Status


def step(model: WorldModel, tree: Tree, state: State) -> State | Terminal:
    status, leaf = tick(tree, state)
    if status is not Status.RUNNING:
        return Terminal(status)
    return model.apply(tree.nodes[leaf].action, state)


@dataclass(frozen=True, slots=True)
class TraceStep:
    state: State
    leaf: int | None
    status: Status


class Termination(str, enum.Enum):
    SUCCESS = "reached-success"
    FAILURE = "reached-failure"
    STEP_LIMIT = "step-limit"
    CYCLE = "cycle-detected"


@dataclass(frozen=True)
class Trace:
    start: State
    steps: tuple[TraceStep, ...]
    reason: Termination

    @property
    def transitions(self) -> int:
        return len(self.steps) - 1

    @property
    def states(self) -> list[State]:
        return [s.state for s in self.steps]


def simulate(model: WorldModel, tree: Tree, x0: State, max_steps: int) -> Trace:
    """Iterate the closed loop until a terminal status, a revisit or the limit.

    ``max_steps`` bounds the number of transitions.  The closed loop is
    deterministic, so revisiting a state proves a cycle.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    steps: list[TraceStep] = []
    seen: set[State] = set()
    state = x0
    while True:
        status, leaf = tick(tree, state)
        steps.append(TraceStep(state, leaf, status))
        if status is Status.SUCCESS:
            return Trace(x0, tuple(steps), Termination.SUCCESS)
        if status is Status.FAILURE:
            return Trace(x0, tuple(steps), Termination.FAILURE)
        if state in seen:
            return Trace(x0, tuple(steps), Termination.CYCLE)
        if len(steps) > max_steps:
            return Trace(x0, tuple(steps), Termination.STEP_LIMIT)
        seen.add(state)
        state = model.apply(tree.nodes[leaf].action, state)


def explain(tree: Tree, state: State) -> list[str]:
    """Why the active leaf runs: its name, the expanded ancestors, then the root.

    An unnamed root is reported by the tree's name.

    Expanded nodes are the make-sure modules, so the chain reads as the goals
    that led to the running action.
    """
    status, leaf = tick(tree, state)
    if status is not Status.RUNNING:
        raise NotRunning(f"root returns {status} at this state; nothing is executing")
    chain = [tree.display_name(leaf)]
    for j in tree.ancestors(leaf):
        if tree.nodes[j].expanded:
            chain.append(tree.display_name(j))
    if leaf != 0:
        chain.append(tree.nodes[0].name or tree.name)
    return chain


IDLE_ACTION = "idle"


def with_idle_layer(tree: Tree, idle_action: str = IDLE_ACTION) -> Tree:
    """Wrap ``tree`` in a top layer that keeps running after success or failure.

    The result is ``fall(seq(T, idle), idle)`` where ``idle`` never succeeds or
    fails, so the wrapped root has empty success and failure regions.
    """
    model = tree.model
    if idle_action not in model.actions:
        model = model.with_actions([ActionSpec(idle_action)])
    idle = Leaf(idle_action, success=FALSE, failure=FALSE, name="Idle")
    root = Fallback((Sequence((tree.root, idle)), idle), name="Idle top layer")
    return Tree(root, model, tree.name)


def replace_subtree(tree: Tree, i: int, new: Node) -> Tree:
    """New tree with the subtree at node ``i`` replaced by ``new``."""

    def rebuild(j: int) -> Node:
        if j == i:
            return new
        node = tree.nodes[j]
        if isinstance(node, Interior) and tree.contains(j, i):
            kids = tuple(rebuild(k) for k in tree.children[j])
            return type(node)(kids, node.name, node.expanded)
        return node

    return Tree(rebuild(0), tree.model, tree.name)
