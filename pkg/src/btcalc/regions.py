"""Exact success/failure/running, influence and operating regions of a tree."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .state import Region, State, union_all
from .tree import Condition, Fallback, Leaf, Sequence, Tree


@dataclass(frozen=True, slots=True)
class RegionTriple:
    S: Region
    F: Region
    R: Region

    def is_partition(self) -> bool:
        s, f, r = self.S, self.F, self.R
        return (
            s.isdisjoint(f)
            and s.isdisjoint(r)
            and f.isdisjoint(r)
            and (s | f | r) == s.model.full
        )


def compute_status_regions(tree: Tree) -> list[RegionTriple]:
    """Per-node (S, F, R), children before parents.

    n-ary nodes are folded left to right, which is the same as nesting them
    pairwise since both compositions are associative.
    """
    model = tree.model
    triples: list[RegionTriple | None] = [None] * len(tree)
    for i in reversed(range(len(tree))):
        node = tree.nodes[i]
        if isinstance(node, Condition):
            s = node.predicate.region(model)
            triples[i] = RegionTriple(s, ~s, model.empty)
        elif isinstance(node, Leaf):
            s = tree.success_pred(i).region(model)
            f = tree.failure_pred(i).region(model)
            triples[i] = RegionTriple(s, f, ~(s | f))
        else:
            kids = [triples[k] for k in tree.children[i]]
            s, f, r = kids[0].S, kids[0].F, kids[0].R
            for kid in kids[1:]:
                if isinstance(node, Sequence):
                    s, f, r = s & kid.S, f | (s & kid.F), r | (s & kid.R)
                else:
                    s, f, r = s | (f & kid.S), f & kid.F, r | (f & kid.R)
            triples[i] = RegionTriple(s, f, r)
    return triples  # type: ignore[return-value]


def compute_influence_regions(
    tree: Tree,
    triples: list[RegionTriple] | None = None,
    external: Region | None = None,
) -> list[Region]:
    """Top-down influence regions; ``external`` replaces ``X`` at the root."""
    if triples is None:
        triples = compute_status_regions(tree)
    influence: list[Region] = [tree.model.full] * len(tree)
    influence[0] = tree.model.full if external is None else external
    for i in range(1, len(tree)):
        brother = tree.big_brother(i)
        if brother is None:
            influence[i] = influence[tree.parent[i]]
        elif isinstance(tree.nodes[tree.parent[i]], Sequence):
            influence[i] = influence[brother] & triples[brother].S
        else:
            influence[i] = influence[brother] & triples[brother].F
    return influence


def compute_operating_regions(
    tree: Tree,
    triples: list[RegionTriple] | None = None,
    influence: list[Region] | None = None,
) -> list[Region]:
    if triples is None:
        triples = compute_status_regions(tree)
    if influence is None:
        influence = compute_influence_regions(tree, triples)
    return [influence[i] & triples[i].R for i in range(len(tree))]


@dataclass(frozen=True)
class RegionMap:
    tree: Tree
    triples: list[RegionTriple]
    influence: list[Region]
    operating: list[Region]

    def S(self, i: int) -> Region:
        return self.triples[i].S

    def F(self, i: int) -> Region:
        return self.triples[i].F

    def R(self, i: int) -> Region:
        return self.triples[i].R

    def I(self, i: int) -> Region:  # noqa: E743
        return self.influence[i]

    def omega(self, i: int) -> Region:
        return self.operating[i]


def analyze(tree: Tree, external: Region | None = None) -> RegionMap:
    triples = compute_status_regions(tree)
    influence = compute_influence_regions(tree, triples, external)
    operating = compute_operating_regions(tree, triples, influence)
    return RegionMap(tree, triples, influence, operating)


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True, slots=True)
class Violation:
    kind: str
    node: int
    state: State
    count: int
    detail: str = ""


@dataclass(frozen=True)
class PartitionReport:
    triples_ok: bool
    parent_child_ok: bool
    leaf_ok: bool
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return self.triples_ok and self.parent_child_ok and self.leaf_ok


def _violation(kind: str, node: int, bad: Region, detail: str = "") -> Violation:
    return Violation(kind, node, bad.first(), len(bad), detail)


def verify_partition(rmap: RegionMap) -> PartitionReport:
    """Check the S/F/R partitions and that operating regions nest as a partition."""
    tree = rmap.tree
    full = tree.model.full
    out: list[Violation] = []

    triples_ok = True
    for i, t in enumerate(rmap.triples):
        for a, b, label in ((t.S, t.F, "S&F"), (t.S, t.R, "S&R"), (t.F, t.R, "F&R")):
            if not a.isdisjoint(b):
                triples_ok = False
                out.append(_violation("triple-overlap", i, a & b, label))
        missing = full - (t.S | t.F | t.R)
        if missing:
            triples_ok = False
            out.append(_violation("triple-uncovered", i, missing))

    parent_child_ok = True
    for j in range(len(tree)):
        kids = tree.children[j]
        if not kids:
            continue
        ok, found = _check_cover(rmap, rmap.omega(j), kids, "children", j)
        parent_child_ok &= ok
        out.extend(found)

    leaf_ok, found = _check_cover(rmap, rmap.omega(0), tree.leaves, "leaves", 0)
    out.extend(found)
    return PartitionReport(triples_ok, parent_child_ok, leaf_ok, tuple(out))


def _check_cover(
    rmap: RegionMap, target: Region, members: Iterable[int], what: str, node: int
) -> tuple[bool, list[Violation]]:
    found = []
    seen = rmap.tree.model.empty
    for k in members:
        overlap = seen & rmap.omega(k)
        if overlap:
            found.append(_violation(f"{what}-overlap", k, overlap))
        seen = seen | rmap.omega(k)
    if seen != target:
        found.append(_violation(f"{what}-cover", node, (seen - target) | (target - seen)))
    return not found, found


@dataclass(frozen=True, slots=True)
class LevelCheck:
    ok: bool
    witness: State | None = None
    reason: str = ""


def validate_level(rmap: RegionMap, level: Iterable[int]) -> LevelCheck:
    """Whether the operating regions of ``level`` plus S_0, F_0 tile the space."""
    level = list(level)
    tree = rmap.tree
    for i in level:
        if not 0 <= i < len(tree):
            raise ValueError(f"node {i} is not in the tree")
    if len(set(level)) != len(level):
        raise ValueError("level lists a node twice")
    seen = rmap.S(0) | rmap.F(0)
    for i in level:
        overlap = seen & rmap.omega(i)
        if overlap:
            return LevelCheck(False, overlap.first(), f"state covered twice (node {i})")
        seen = seen | rmap.omega(i)
    missing = tree.model.full - seen
    if missing:
        return LevelCheck(False, missing.first(), "state not covered")
    return LevelCheck(True)


def leaf_level(tree: Tree) -> list[int]:
    return tree.leaves


def union_omega(rmap: RegionMap, nodes: Iterable[int]) -> Region:
    return union_all(rmap.tree.model, (rmap.omega(i) for i in nodes))
