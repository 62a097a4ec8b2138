"""Backchained tree synthesis from action pre/postconditions.

A "make sure X" fragment is ``fall(cond(X), option_1, ..., option_k)`` where
each option is ``seq(cond(pre_1), ..., act(Y))`` for an action ``Y`` whose
postcondition implies ``X``.  Starting from a sequence of goals, conditions
that some action can achieve are replaced by such fragments, breadth first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence as Seq

from .regions import analyze
from .state import ActionSpec, Predicate, State, WorldModel
from .tree import Condition, Fallback, Leaf, Node, Sequence, Tree, replace_subtree


class SynthesisError(ValueError):
    """Inconsistent library or runaway expansion."""


@dataclass(frozen=True)
class ActionTemplate:
    id: str
    preconditions: tuple[Predicate, ...]
    post: Predicate
    effect: ActionSpec

    @classmethod
    def from_action(cls, action: ActionSpec) -> "ActionTemplate":
        if action.post is None:
            raise SynthesisError(f"action {action.id!r} declares no postcondition")
        return cls(action.id, tuple(action.preconditions), action.post, action)


def library_from_model(model: WorldModel) -> list[ActionTemplate]:
    """Templates for every action with a postcondition, in declaration order."""
    return [ActionTemplate.from_action(a) for a in model.actions.values() if a.post is not None]


def check_template(model: WorldModel, template: ActionTemplate) -> list[State]:
    """States satisfying the preconditions from which repeating the effect
    never reaches the postcondition.  Empty means the template is sound."""
    pre = model.full
    for p in template.preconditions:
        pre = pre & p.region(model)
    post = template.post.region(model)
    succ = model.successors(template.id)
    bad = []
    for x in pre:
        seen = set()
        while x not in post and x not in seen:
            seen.add(x)
            x = int(succ[x])
        if x not in post:
            bad.append(next(iter(sorted(seen))))
    return bad


def _achieves(model: WorldModel, template: ActionTemplate, goal: Predicate) -> bool:
    post = template.post.region(model)
    return bool(post) and post <= goal.region(model)


def achievers(model: WorldModel, library: Seq[ActionTemplate], goal: Predicate) -> list[ActionTemplate]:
    return [t for t in library if _achieves(model, t, goal)]


def make_sure(model: WorldModel, goal: Predicate, options: Seq[ActionTemplate]) -> Node:
    """``fall(cond(goal), options...)``, or the bare condition without options."""
    check = Condition(goal)
    if not options:
        return check
    kids: list[Node] = [check]
    for t in options:
        if not _achieves(model, t, goal):
            raise SynthesisError(f"postcondition of {t.id!r} does not imply {goal.to_text()}")
        leaf = Leaf(t.id)
        if t.preconditions:
            kids.append(Sequence(tuple(Condition(p) for p in t.preconditions) + (leaf,)))
        else:
            kids.append(leaf)
    return Fallback(tuple(kids), name=f"Make sure {goal.to_text()}", expanded=True)


def _is_check_of_make_sure(tree: Tree, i: int) -> bool:
    p = tree.parent[i]
    return p is not None and tree.nodes[p].expanded and tree.children[p][0] == i


def expandable_conditions(tree: Tree, library: Seq[ActionTemplate]) -> list[int]:
    """Conditions worth replacing by a make-sure fragment.

    Skipped: conditions no template achieves, the check of a make-sure
    fragment, preconditions whose own sequence already holds an achieving
    action, and conditions already guaranteed wherever they are evaluated
    (their influence region lies inside their region).
    """
    model = tree.model
    rmap = None
    out = []
    for i, node in enumerate(tree.nodes):
        if not isinstance(node, Condition):
            continue
        found = achievers(model, library, node.predicate)
        if not found or _is_check_of_make_sure(tree, i):
            continue
        p = tree.parent[i]
        if p is not None and isinstance(tree.nodes[p], Sequence):
            ids = {t.id for t in found}
            siblings = [tree.nodes[k] for k in tree.children[p]]
            if any(isinstance(s, Leaf) and s.action in ids for s in siblings):
                continue
        rmap = analyze(tree) if rmap is None else rmap
        if rmap.I(i) <= rmap.S(i):
            continue
        out.append(i)
    return out


def _depth(tree: Tree, i: int) -> int:
    return sum(1 for j in tree.ancestors(i) if tree.nodes[j].expanded)


def _chain(tree: Tree, i: int) -> list[str]:
    goals = [tree.nodes[j].children[0].predicate.to_text() for j in tree.ancestors(i) if tree.nodes[j].expanded]
    return list(reversed(goals)) + [tree.nodes[i].predicate.to_text()]


def backchain(
    model: WorldModel,
    goals: Seq[Predicate],
    library: Seq[ActionTemplate] | None = None,
    max_depth: int = 8,
    name: str = "synthesized",
) -> Tree:
    """Expand goal conditions into make-sure fragments until nothing is left.

    The root is a sequence of the goal fragments (a single goal gives its
    fragment directly).  A condition still expandable at ``max_depth`` raises
    :class:`SynthesisError` naming the chain of goals that led to it.
    """
    if not goals:
        raise SynthesisError("the goal list is empty")
    if max_depth < 1:
        raise SynthesisError("max_depth must be at least 1")
    library = library_from_model(model) if library is None else list(library)
    frags = [make_sure(model, g, achievers(model, library, g)) for g in goals]
    root: Node = frags[0] if len(frags) == 1 else Sequence(tuple(frags))
    tree = Tree(root, model, name)
    while True:
        todo = expandable_conditions(tree, library)
        if not todo:
            return tree
        i = min(todo, key=lambda k: (_depth(tree, k), k))
        if _depth(tree, i) >= max_depth:
            chain = _chain(tree, i)
            kind = "cyclic achievement chain" if chain[-1] in chain[:-1] else "expansion deeper than max_depth"
            raise SynthesisError(f"{kind}: {' -> '.join(chain)}")
        goal = tree.nodes[i].predicate
        tree = replace_subtree(tree, i, make_sure(model, goal, achievers(model, library, goal)))


def mark_expandable(tree: Tree, library: Seq[ActionTemplate]) -> Tree:
    """Flag every still-expandable condition (the double-stroke convention)."""
    for i in expandable_conditions(tree, library):
        node = tree.nodes[i]
        tree = replace_subtree(tree, i, Condition(node.predicate, node.action, node.name, True))
    return tree


def double_stroked(tree: Tree) -> list[int]:
    return [i for i, node in enumerate(tree.nodes) if node.expanded]


def count_make_sure(tree: Tree) -> int:
    return sum(1 for node in tree.nodes if isinstance(node, Fallback) and node.expanded)


def templates(actions: Iterable[ActionSpec]) -> list[ActionTemplate]:
    return [ActionTemplate.from_action(a) for a in actions]
