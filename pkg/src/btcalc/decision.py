"""Decision structures: compilation from trees, execution, modules, complexity.

A decision structure (DS) is a directed graph with arcs labelled ``"S"`` or
``"F"`` (any finite label set is accepted) and a source node.  Executing it
starts at the source and follows the arc matching the label returned by the
current node, stopping when no such arc exists.

Modules are enumerated by growing predecessor-closed sets from each candidate
entry node.  Two independent enumerations serve as oracles on small inputs:
a numpy bitmask sweep over every node subset and :func:`find_modules_slow`,
the direct reading of the definition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable

import numpy as np

from .tree import Condition, Leaf, Sequence, Tree

MAX_BITMASK_NODES = 14
MAX_MODULE_CANDIDATES = 200_000


class DsError(ValueError):
    """Malformed decision structure."""


class DsCycleError(RuntimeError):
    """Execution revisited more nodes than the structure has."""


class DsTooLarge(ValueError):
    """Subset enumeration refused."""


@dataclass(frozen=True)
class DecisionStructure:
    """Nodes, labelled arcs ``(src, label, dst)`` as node indices, and a source."""

    nodes: tuple[Hashable, ...]
    edges: tuple[tuple[int, str, int], ...] = ()
    source: int = 0

    def __post_init__(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise DsError("a decision structure needs at least one node")
        if len(set(self.nodes)) != n:
            raise DsError("node names must be unique")
        if not 0 <= self.source < n:
            raise DsError("source is not a node")
        seen = set()
        for u, label, v in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise DsError(f"arc {(u, label, v)} refers to a missing node")
            if (u, label) in seen:
                raise DsError(f"node {self.nodes[u]!r} has two arcs labelled {label!r}")
            seen.add((u, label))
        missing = set(range(n)) - _reach(self.source, self.edges, set(range(n)))
        if missing:
            names = sorted(str(self.nodes[i]) for i in missing)
            raise DsError(f"nodes unreachable from the source: {', '.join(names)}")

    @classmethod
    def from_named(
        cls,
        nodes: Iterable[Hashable],
        edges: Iterable[tuple[Hashable, str, Hashable]],
        source: Hashable | None = None,
    ) -> "DecisionStructure":
        nodes = tuple(nodes)
        index = {name: i for i, name in enumerate(nodes)}
        arcs = tuple(sorted((index[u], lbl, index[v]) for u, lbl, v in edges))
        return cls(nodes, arcs, 0 if source is None else index[source])

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sorted({lbl for _, lbl, _ in self.edges}))

    def out(self, u: int) -> dict[str, int]:
        return {lbl: v for a, lbl, v in self.edges if a == u}

    def named_edges(self) -> list[tuple[Hashable, str, Hashable]]:
        return [(self.nodes[u], lbl, self.nodes[v]) for u, lbl, v in self.edges]

    def induced(self, members: Iterable[int], source: int) -> "DecisionStructure":
        """The sub-structure on ``members`` with the given source (an index of self)."""
        keep = sorted(members)
        index = {old: new for new, old in enumerate(keep)}
        arcs = tuple(
            (index[u], lbl, index[v]) for u, lbl, v in self.edges if u in index and v in index
        )
        return DecisionStructure(tuple(self.nodes[i] for i in keep), arcs, index[source])


def _reach(start: int, edges: Iterable[tuple[int, str, int]], allowed: set[int]) -> set[int]:
    adj: dict[int, list[int]] = {}
    for u, _, v in edges:
        if u in allowed and v in allowed:
            adj.setdefault(u, []).append(v)
    seen = {start}
    stack = [start]
    while stack:
        for v in adj.get(stack.pop(), ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


# ---------------------------------------------------------------------------
# compilation and execution


def compile_to_ds(tree: Tree) -> DecisionStructure:
    """One DS node per leaf (preorder id); arcs follow where S or F lead next.

    Running produces no arc.  A leaf whose status would end the tick at the
    root gets no arc for that label.
    """
    edges: list[tuple[int, str, int]] = []

    def build(i: int, on_s: int | None, on_f: int | None) -> int:
        node = tree.nodes[i]
        if isinstance(node, (Leaf, Condition)):
            if on_s is not None:
                edges.append((i, "S", on_s))
            if on_f is not None:
                edges.append((i, "F", on_f))
            return i
        entry_next: int | None = on_s if isinstance(node, Sequence) else on_f
        for child in reversed(tree.children[i]):
            if isinstance(node, Sequence):
                entry_next = build(child, entry_next, on_f)
            else:
                entry_next = build(child, on_s, entry_next)
        assert entry_next is not None
        return entry_next

    source = build(0, None, None)
    leaves = tree.leaves
    index = {leaf: k for k, leaf in enumerate(leaves)}
    arcs = tuple(sorted((index[u], lbl, index[v]) for u, lbl, v in edges))
    return DecisionStructure(tuple(leaves), arcs, index[source])


Oracle = Callable[[Hashable], "str | None"]


def execute_ds(ds: DecisionStructure, oracle: Oracle) -> tuple[Hashable, str | None]:
    """Walk from the source; return the stopping node and its label.

    A ``None`` label means the node keeps running and is the selected
    controller; otherwise the label had no outgoing arc.
    """
    out = [dict() for _ in ds.nodes]
    for u, lbl, v in ds.edges:
        out[u][lbl] = v
    u = ds.source
    for _ in range(len(ds.nodes) + 1):
        label = oracle(ds.nodes[u])
        if label is None or label not in out[u]:
            return ds.nodes[u], label
        u = out[u][label]
    raise DsCycleError("execution walk revisited a node; the DS is cyclic under this oracle")


def tree_oracle(tree: Tree, state: int) -> Oracle:
    """Status oracle for compiled DS nodes (leaf ids) at one state."""
    asg = tree.model.unpack(state)

    def oracle(node: Hashable) -> str | None:
        i = int(node)  # type: ignore[arg-type]
        if tree.success_pred(i).evaluate(asg):
            return "S"
        if tree.failure_pred(i).evaluate(asg):
            return "F"
        return None

    return oracle


# ---------------------------------------------------------------------------
# modules


def is_module(ds: DecisionStructure, members: Iterable[int]) -> bool:
    """Direct check of the module definition for one node subset."""
    y = set(members)
    if not y:
        return False
    entries = {v for u, _, v in ds.edges if u not in y and v in y}
    if ds.source in y:
        entries.add(ds.source)
    if len(entries) != 1:
        return False
    (src,) = entries
    if _reach(src, ds.edges, y) != y:
        return False
    out = [ds.out(u) for u in range(len(ds))]
    for u, lbl, v in ds.edges:
        if u in y and v not in y:
            for w in y:
                if lbl not in out[w] or not (out[w][lbl] == v or out[w][lbl] in y):
                    return False
    return True


def module_source(ds: DecisionStructure, members: Iterable[int]) -> int:
    y = set(members)
    entries = {v for u, _, v in ds.edges if u not in y and v in y}
    if ds.source in y:
        entries.add(ds.source)
    if len(entries) != 1:
        raise DsError("not a module: no unique entry node")
    return entries.pop()


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a - ((a >> 1) & 0x5555)
    a = (a & 0x3333) + ((a >> 2) & 0x3333)
    a = (a + (a >> 4)) & 0x0F0F
    return (a + (a >> 8)) & 0x1F


def find_modules(ds: DecisionStructure, budget: int = MAX_MODULE_CANDIDATES) -> list[frozenset[int]]:
    """Every module, as sets of node indices, in increasing bitmask order.

    A member other than the entry ``s`` may only have predecessors inside the
    module, so the candidates for entry ``s`` are the predecessor-closed sets
    grown from ``s``; each is a union of single-node closures, and reachability
    from ``s`` follows from closure.  ``budget`` caps the candidates visited.
    """
    n = len(ds)
    preds: list[set[int]] = [set() for _ in range(n)]
    for u, _, v in ds.edges:
        preds[v].add(u)
    out = [ds.out(u) for u in range(n)]
    labels = sorted({lbl for _, lbl, _ in ds.edges})
    found: set[int] = set()
    visited = 0

    def closure(base: int, v: int, s: int) -> int | None:
        mask, stack = base, [v]
        while stack:
            w = stack.pop()
            if mask >> w & 1:
                continue
            if w == ds.source:
                return None  # the global source would be a second entry
            mask |= 1 << w
            stack.extend(p for p in preds[w] if p != s and not mask >> p & 1)
        return mask

    def exits_ok(mask: int) -> bool:
        members = _members(mask)
        for label in labels:
            target = None
            leaving = False
            for w in members:
                dst = out[w].get(label)
                if dst is not None and not mask >> dst & 1:
                    if target is not None and target != dst:
                        return False
                    target, leaving = dst, True
            if leaving and any(label not in out[w] for w in members):
                return False
        return True

    for s in range(n):
        seen = {1 << s}
        stack = [1 << s]
        while stack:
            mask = stack.pop()
            visited += 1
            if visited > budget:
                raise DsTooLarge(f"module search exceeded {budget} candidate sets on {n} nodes")
            if exits_ok(mask):
                found.add(mask)
            frontier = {v for w in _members(mask) for v in out[w].values() if not mask >> v & 1}
            for v in frontier:
                nxt = closure(mask, v, s)
                if nxt is not None and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return [_members(m) for m in sorted(found)]


def find_modules_bitmask(ds: DecisionStructure, max_nodes: int = MAX_BITMASK_NODES) -> list[frozenset[int]]:
    """Exhaustive vectorised sweep over all node subsets (oracle for small inputs)."""
    n = len(ds)
    if n > max_nodes:
        raise DsTooLarge(f"bitmask enumeration is limited to {max_nodes} nodes, got {n}")
    masks = np.arange(1, 1 << n, dtype=np.int64)

    def bit(v: int) -> np.ndarray:
        return (masks >> v) & 1

    entries = np.zeros_like(masks)
    for u, _, v in ds.edges:
        entries |= ((1 - bit(u)) & bit(v)) << v
    entries |= bit(ds.source) << ds.source
    ok = _popcount(entries) == 1

    reach = entries.copy()
    for _ in range(n):
        before = reach
        step = reach.copy()
        for u, _, v in ds.edges:
            step |= (((reach >> u) & 1) & bit(v)) << v
        reach = step
        if np.array_equal(before, reach):
            break
    ok &= reach == masks

    for label in sorted({lbl for _, lbl, _ in ds.edges}):
        has = 0
        for u, lbl, _ in ds.edges:
            if lbl == label:
                has |= 1 << u
        targets = np.zeros_like(masks)
        for u, lbl, v in ds.edges:
            if lbl == label:
                targets |= (bit(u) & (1 - bit(v))) << v
        exits = targets != 0
        ok &= ~exits | ((_popcount(targets) == 1) & ((masks & ~has) == 0))

    return [_members(int(m)) for m in masks[ok]]


def _members(mask: int) -> frozenset[int]:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def find_modules_slow(ds: DecisionStructure) -> list[frozenset[int]]:
    """Reference enumeration through :func:`is_module`."""
    n = len(ds)
    out = []
    for mask in range(1, 1 << n):
        y = _members(mask)
        if is_module(ds, y):
            out.append(y)
    return out


def strong_modules(modules: Iterable[frozenset[int]]) -> list[frozenset[int]]:
    """Modules overlapping no other module (overlap: meet, neither contains the other)."""
    mods = list(modules)
    out = []
    for a in mods:
        if all(not (a & b) or a <= b or b <= a for b in mods):
            out.append(a)
    return out


@dataclass(frozen=True)
class Decomposition:
    """A block of nodes (indices of the top DS) with its quotient and sub-blocks."""

    members: frozenset[int]
    quotient: DecisionStructure | None = None
    children: tuple["Decomposition", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def quotients(self) -> list[DecisionStructure]:
        out = [] if self.quotient is None else [self.quotient]
        for child in self.children:
            out.extend(child.quotients())
        return out


def quotient(ds: DecisionStructure, blocks: list[frozenset[int]]) -> DecisionStructure:
    """Collapse each block to one node named by its sorted member names."""
    owner = {v: k for k, block in enumerate(blocks) for v in block}
    arcs = set()
    for u, lbl, v in ds.edges:
        if owner[u] != owner[v]:
            arcs.add((owner[u], lbl, owner[v]))
    names = tuple(tuple(sorted((ds.nodes[i] for i in b), key=str)) for b in blocks)
    seen: dict[tuple[int, str], int] = {}
    for u, lbl, v in sorted(arcs):
        if seen.setdefault((u, lbl), v) != v:
            raise DsError("quotient is not a decision structure: a label leaves a block twice")
    return DecisionStructure(names, tuple(sorted(arcs)), owner[ds.source])


def module_decomposition(ds: DecisionStructure, budget: int = MAX_MODULE_CANDIDATES) -> Decomposition:
    """Recursive partition into maximal proper strong modules, with quotients."""
    return _decompose(ds, list(range(len(ds))), budget)


def _decompose(ds: DecisionStructure, ids: list[int], budget: int) -> Decomposition:
    # ``ids`` maps local indices of ``ds`` to indices of the top structure
    members = frozenset(ids)
    n = len(ds)
    if n == 1:
        return Decomposition(members)
    whole = frozenset(range(n))
    proper = [m for m in strong_modules(find_modules(ds, budget)) if m != whole]
    maximal = [m for m in proper if not any(m < other for other in proper)]
    blocks = sorted(maximal, key=lambda b: min(b))
    children = []
    for block in blocks:
        sub = ds.induced(block, module_source(ds, block))
        children.append(_decompose(sub, [ids[i] for i in sorted(block)], budget))
    return Decomposition(members, quotient(ds, blocks), tuple(children))


# ---------------------------------------------------------------------------
# complexity


def cyclomatic(ds: DecisionStructure) -> int:
    """``E - V + C + 1`` on the undirected multigraph underlying ``ds``."""
    parent = list(range(len(ds)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, _, v in ds.edges:
        parent[find(u)] = find(v)
    components = len({find(a) for a in range(len(ds))})
    return len(ds.edges) - len(ds) + components + 1


def is_path(ds: DecisionStructure) -> bool:
    """Whether the underlying undirected multigraph is a simple path."""
    n = len(ds)
    if len(ds.edges) != n - 1:
        return False
    degree = [0] * n
    pairs = set()
    for u, _, v in ds.edges:
        if u == v:
            return False
        pairs.add(frozenset((u, v)))
        degree[u] += 1
        degree[v] += 1
    return len(pairs) == n - 1 and max(degree, default=0) <= 2 and cyclomatic(ds) == 1


def essential_complexity(ds: DecisionStructure, budget: int = MAX_MODULE_CANDIDATES) -> int:
    """Largest cyclomatic complexity over the quotients of the decomposition."""
    quotients = module_decomposition(ds, budget).quotients()
    return max((cyclomatic(q) for q in quotients), default=1)


def is_bt_equivalent(ds: DecisionStructure, budget: int = MAX_MODULE_CANDIDATES) -> bool:
    return essential_complexity(ds, budget) == 1


def all_quotients_are_paths(ds: DecisionStructure, budget: int = MAX_MODULE_CANDIDATES) -> bool:
    return all(is_path(q) for q in module_decomposition(ds, budget).quotients())


__all__ = [
    "DecisionStructure",
    "Decomposition",
    "DsError",
    "DsCycleError",
    "DsTooLarge",
    "compile_to_ds",
    "execute_ds",
    "tree_oracle",
    "is_module",
    "find_modules",
    "find_modules_bitmask",
    "find_modules_slow",
    "strong_modules",
    "module_decomposition",
    "quotient",
    "cyclomatic",
    "is_path",
    "essential_complexity",
    "is_bt_equivalent",
    "all_quotients_are_paths",
]
