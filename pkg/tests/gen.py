"""Seeded random generators for models, trees, decision structures and documents.

Every generator takes a ``random.Random`` so test corpora are reproducible and
hypothesis can drive them through an integer seed.
"""

from __future__ import annotations

import random

from btcalc.decision import DecisionStructure
from btcalc.dsl import CbfDecl, CheckDecl, Document, GoalsDecl, ModelDecl, TreeDecl
from btcalc.expr import Expr, Num, Sym, add, mul, neg, power, sub
from btcalc.state import (
    FALSE,
    ActionSpec,
    And,
    Assign,
    Const,
    Eq,
    Not,
    Or,
    Predicate,
    Var,
    Variable,
    WorldModel,
)
from btcalc.tree import Condition, Fallback, Leaf, Node, Sequence, Tree

NAME_CHARS = "abcxyz AZ_-\"\\\né→?"


def bool_model(rng: random.Random, n_vars: int, n_actions: int) -> WorldModel:
    variables = tuple(Variable.boolean(f"v{i}") for i in range(n_vars))
    actions = tuple(random_action(rng, variables, f"a{k}") for k in range(n_actions))
    return WorldModel(variables, actions, "m")


def mixed_variables(rng: random.Random, n_vars: int) -> tuple[Variable, ...]:
    out = []
    for i in range(n_vars):
        if rng.random() < 0.3:
            size = rng.randint(1, 4)
            out.append(Variable.enum(f"e{i}", [f"k{j}" for j in range(size)]))
        else:
            out.append(Variable.boolean(f"v{i}"))
    return tuple(out)


def literal(rng: random.Random, variables: tuple[Variable, ...]) -> Predicate:
    var = rng.choice(variables)
    if var.is_bool:
        return Var(var.name) if rng.random() < 0.5 else Not(Var(var.name))
    return Eq(var.name, rng.choice(var.values))


def random_pred(rng: random.Random, variables: tuple[Variable, ...], depth: int = 2) -> Predicate:
    """Well-formed predicate; connectives always have at least two operands."""
    r = rng.random()
    if depth <= 0 or r < 0.35:
        if r < 0.03:
            return Const(rng.random() < 0.5)
        return literal(rng, variables)
    if r < 0.5:
        return Not(random_pred(rng, variables, depth - 1))
    args = tuple(random_pred(rng, variables, depth - 1) for _ in range(rng.randint(2, 3)))
    return And(args) if r < 0.75 else Or(args)


def random_action(rng: random.Random, variables: tuple[Variable, ...], action_id: str) -> ActionSpec:
    targets = rng.sample(list(variables), rng.randint(1, min(3, len(variables))))
    assigns = []
    for var in targets:
        value = rng.choice(var.values)
        if rng.random() < 0.3:
            assigns.append(Assign(var.name, value, random_pred(rng, variables, 1), rng.choice(var.values)))
        else:
            assigns.append(Assign(var.name, value))
    pre = tuple(random_pred(rng, variables, 1) for _ in range(rng.randint(0, 2)))
    return ActionSpec(action_id, tuple(assigns), pre, random_pred(rng, variables, 1))


def _name(rng: random.Random) -> str | None:
    if rng.random() < 0.7:
        return None
    return "".join(rng.choice(NAME_CHARS) for _ in range(rng.randint(0, 8)))


def random_leaf(rng: random.Random, model: WorldModel, names: bool = False) -> Node:
    variables = model.variables
    name = _name(rng) if names else None
    expanded = names and rng.random() < 0.2
    if rng.random() < 0.4:
        return Condition(random_pred(rng, variables), None, name, expanded)
    action = rng.choice(list(model.actions.values()))
    if rng.random() < 0.3:
        post = action.post
        failure = FALSE if rng.random() < 0.5 else And((random_pred(rng, variables, 1), Not(post)))
        return Leaf(action.id, None, failure, name, expanded)
    success = random_pred(rng, variables)
    failure = FALSE if rng.random() < 0.3 else And((random_pred(rng, variables, 1), Not(success)))
    return Leaf(action.id, success, failure, name, expanded)


def random_node(rng: random.Random, model: WorldModel, budget: int, names: bool = False) -> Node:
    """Random subtree with at most ``budget`` nodes (``budget >= 1``)."""
    if budget < 3 or rng.random() < 0.3:
        return random_leaf(rng, model, names)
    budget -= 1
    k = rng.randint(2, min(4, budget))
    sizes = [1] * k
    for _ in range(budget - k):
        if rng.random() < 0.6:
            sizes[rng.randrange(k)] += 1
    kids = tuple(random_node(rng, model, s, names) for s in sizes)
    cls = Sequence if rng.random() < 0.5 else Fallback
    name = _name(rng) if names else None
    return cls(kids, name, names and rng.random() < 0.2)


def random_tree(rng: random.Random, model: WorldModel, max_nodes: int = 15, names: bool = False) -> Tree:
    return Tree(random_node(rng, model, rng.randint(1, max_nodes), names), model, "t")


def leaf_bounded_tree(rng: random.Random, model: WorldModel, max_leaves: int) -> Tree:
    """Random tree whose leaf count does not exceed ``max_leaves``."""
    while True:
        tree = random_tree(rng, model, 2 * max_leaves - 1)
        if len(tree.leaves) <= max_leaves:
            return tree


def random_ds(rng: random.Random, n: int, labels: str = "SF", density: float = 0.7) -> DecisionStructure:
    """Random DS on ``n`` nodes; a random spanning arborescence keeps it reachable."""
    out: list[dict[str, int]] = [{} for _ in range(n)]
    order = list(range(1, n))
    rng.shuffle(order)
    placed = [0]
    for v in order:
        free = [(u, lbl) for u in placed for lbl in labels if lbl not in out[u]]
        if not free:
            return random_ds(rng, n, labels, density)
        u, lbl = rng.choice(free)
        out[u][lbl] = v
        placed.append(v)
    for u in range(n):
        for lbl in labels:
            if lbl not in out[u] and rng.random() < density * 0.5:
                out[u][lbl] = rng.randrange(n)
    edges = tuple(sorted((u, lbl, v) for u in range(n) for lbl, v in out[u].items()))
    return DecisionStructure(tuple(range(n)), edges, 0)


# ---------------------------------------------------------------------------
# documents


def random_expr(rng: random.Random, n: int, depth: int = 2) -> Expr:
    r = rng.random()
    if depth <= 0 or r < 0.3:
        if rng.random() < 0.5:
            return Sym(rng.randint(1, n))
        return Num(round(rng.uniform(-5, 5), rng.randint(0, 4)))
    if r < 0.4:
        return neg(random_expr(rng, n, depth - 1))
    if r < 0.5:
        return power(random_expr(rng, n, depth - 1), rng.randint(2, 4))
    op = rng.choice((add, sub, mul))
    return op(random_expr(rng, n, depth - 1), random_expr(rng, n, depth - 1))


def random_cbf(rng: random.Random, name: str) -> CbfDecl:
    n, m = rng.randint(1, 3), rng.randint(1, 3)
    if rng.random() < 0.5:
        m = n
    lo = tuple(-round(rng.uniform(0.1, 2), 3) for _ in range(m))
    hi = tuple(round(rng.uniform(0.1, 2), 3) for _ in range(m))
    if rng.random() < 0.5:
        lo, hi = (lo[0],) * m, (hi[0],) * m
    barriers = tuple(random_expr(rng, n) for _ in range(rng.randint(1, 3)))
    nominal = tuple(random_expr(rng, n) for _ in range(m))
    x0 = tuple(round(rng.uniform(-1, 1), 4) for _ in range(n)) if rng.random() < 0.7 else None
    drift = tuple(random_expr(rng, n, 1) for _ in range(n)) if rng.random() < 0.5 else None
    needs_input = n != m or rng.random() < 0.3
    inp = tuple(random_expr(rng, n, 1) for _ in range(n * m)) if needs_input else None
    alpha = round(rng.uniform(0.1, 50), 3)
    return CbfDecl(name, n, m, lo, hi, barriers, alpha, nominal, x0, drift, inp)


def random_document(rng: random.Random) -> Document:
    variables = mixed_variables(rng, rng.randint(1, 5))
    actions = tuple(random_action(rng, variables, f"act{k}") for k in range(rng.randint(1, 4)))
    model = WorldModel(variables, actions, "world")
    trees = []
    for k in range(rng.randint(0, 3)):
        root = random_node(rng, model, rng.randint(1, 12), names=True)
        trees.append(TreeDecl(f"tree{k}", root))
    goals = tuple(
        GoalsDecl(f"goals{k}", tuple(random_pred(rng, variables) for _ in range(rng.randint(1, 3))))
        for k in range(rng.randint(0, 2))
    )
    checks = []
    for k, decl in enumerate(trees):
        if rng.random() < 0.5:
            continue
        size = len(Tree(decl.root, model, decl.name))
        level = tuple(rng.sample(range(size), rng.randint(1, size))) if rng.random() < 0.6 else None
        labeling = None
        if level is not None and rng.random() < 0.5:
            labeling = tuple(rng.sample(level, len(level)))
        cbar = random_pred(rng, variables) if rng.random() < 0.5 else None
        checks.append(CheckDecl(f"check{k}", decl.name, level, labeling, cbar))
    cbfs = tuple(random_cbf(rng, f"scenario{k}") for k in range(rng.randint(0, 2)))
    return Document(
        ModelDecl("world", variables), actions, tuple(trees), goals, tuple(checks), cbfs
    )
